// Payload shapes of the annotation service JSON API.

export type Category = 'medication' | 'side_effect'

export interface PreAnnotation {
  entry_id: string
  category: Category
  span: [number, number]
  window_size: number
  surface: string
  matched_term: string
  similarity: number
  negated: boolean
}

/** A label as POSTed to and returned by the server. */
export interface LabelPayload {
  category: Category
  term: string
  negated: boolean
  entry_id?: string | null
  span?: [number, number] | null
}

export interface TaskView {
  user_id: string
  collapsed_text: string
  pre_annotations: PreAnnotation[]
  assigned_annotators: string[]
  annotated_by: string[]
  status: 'open' | 'reconciled'
  annotations?: Record<string, LabelPayload[]>
}

export interface TasksResponse {
  round: number
  lexicon_version: number
  tasks: TaskView[]
}

export interface RoundSummary {
  round: number
  annotators: string[]
  tasks: number
  status: 'open' | 'reconciled'
}

export interface AgreementPair {
  a: string
  b: string
  kappa: number | null
}

export interface AgreementPayload {
  round: number
  annotators: string[]
  pairs: AgreementPair[]
  mean: number | null
  warnings: string[]
}

export interface Candidate {
  term: string
  category: Category
  count: number
  profiles: string[]
}

export interface CandidatesResponse {
  lexicon_version: number
  candidates: Candidate[]
}

export interface EvalPoint {
  lexicon_version: number
  precision?: number
  recall?: number
  f1?: number
  status: 'pending' | 'done'
}

export interface HealthResponse {
  status: string
  version: string
  lexicon_version: number
}

export interface ApprovalRequest {
  term: string
  category: Category
  functional_class?: string
  synonyms?: string[]
  round?: number
}
