import type {
  AgreementPayload,
  ApprovalRequest,
  CandidatesResponse,
  EvalPoint,
  HealthResponse,
  LabelPayload,
  RoundSummary,
  TasksResponse,
} from './types'

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message)
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

/** Thin typed client over the annotation service; the server is the single
 * source of truth and every view is a projection of these responses. */
export class ApiClient {
  constructor(
    private fetchFn: FetchLike,
    private base = '',
    public annotatorId = '',
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init)
    if (!response.ok) {
      let code = 'http_error'
      let message = `${response.status}`
      try {
        const body = await response.json()
        code = body?.detail?.code ?? code
        message = body?.detail?.message ?? message
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, code, message)
    }
    return (await response.json()) as T
  }

  health(): Promise<HealthResponse> {
    return this.request('/api/health')
  }

  rounds(): Promise<{ rounds: RoundSummary[] }> {
    return this.request('/api/rounds')
  }

  tasks(round: number): Promise<TasksResponse> {
    return this.request(`/api/rounds/${round}/tasks`)
  }

  agreement(round: number): Promise<AgreementPayload> {
    return this.request(`/api/rounds/${round}/agreement`)
  }

  candidates(): Promise<CandidatesResponse> {
    return this.request('/api/lexicon/candidates')
  }

  evalHistory(): Promise<{ entries: EvalPoint[] }> {
    return this.request('/api/eval/history')
  }

  submitAnnotation(round: number, userId: string, labels: LabelPayload[]) {
    return this.request<{ round: number; user_id: string; labels: number }>(
      `/api/rounds/${round}/annotations`,
      {
        method: 'POST',
        headers: {
          'Content-Type': 'application/json',
          'X-Annotator-Id': this.annotatorId,
        },
        body: JSON.stringify({ user_id: userId, labels }),
      },
    )
  }

  approve(approval: ApprovalRequest): Promise<{ version: number; entry_id: string }> {
    return this.request('/api/lexicon/approve', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(approval),
    })
  }
}
