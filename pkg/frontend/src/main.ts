// DOM wiring: one annotator session, tabbed between the task list and the
// review dashboard.  No client-only state survives a refresh; everything is
// re-fetched from the server.

import { ApiClient, ApiError } from './api'
import {
  addSelection,
  buildSubmission,
  newWorkState,
  selectionFromRange,
  SelectionError,
  toggleDecision,
  removeSelection,
  type TaskWorkState,
} from './spans'
import {
  renderAdded,
  renderAgreement,
  renderCandidates,
  renderEvalChart,
  renderPreAnnotations,
  renderTokens,
  escapeHtml,
} from './render'
import { agreementTable, candidateQueue, evalChart } from './views'
import type { Candidate, Category, TaskView } from './types'

const app = document.getElementById('app')!
const client = new ApiClient((input, init) => fetch(input, init))

interface UiState {
  annotator: string
  round: number
  view: 'tasks' | 'dashboard'
  currentTask: TaskView | null
  work: TaskWorkState | null
  hidePre: boolean
  anchor: number | null
  notice: string
  lexiconVersion: number
}

const state: UiState = {
  annotator: localStorage.getItem('annotator') ?? '',
  round: 1,
  view: 'tasks',
  currentTask: null,
  work: null,
  hidePre: false,
  anchor: null,
  notice: '',
  lexiconVersion: 0,
}

let candidates: Candidate[] = []

async function refresh(): Promise<void> {
  client.annotatorId = state.annotator
  if (!state.annotator) {
    app.innerHTML = `<section class="login">
      <h1>annotation workbench</h1>
      <label>annotator id <input id="annotator-input" placeholder="e.g. alice"></label>
      <button id="annotator-save">start</button>
    </section>`
    document.getElementById('annotator-save')!.addEventListener('click', () => {
      const value = (document.getElementById('annotator-input') as HTMLInputElement).value.trim()
      if (value) {
        state.annotator = value
        localStorage.setItem('annotator', value)
        void refresh()
      }
    })
    return
  }
  try {
    if (state.view === 'tasks') await renderTaskView()
    else await renderDashboardView()
  } catch (error) {
    app.innerHTML = `<p class="error">${escapeHtml(String(error))}</p>`
  }
}

function chrome(inner: string): string {
  return `<header>
      <h1>annotation workbench</h1>
      <nav>
        <button data-view="tasks" ${state.view === 'tasks' ? 'class="active"' : ''}>tasks</button>
        <button data-view="dashboard" ${state.view === 'dashboard' ? 'class="active"' : ''}>review</button>
        <span class="meta">round ${state.round} · lexicon v<span data-lexicon-version>${state.lexiconVersion}</span> · ${escapeHtml(state.annotator)}</span>
      </nav>
      ${state.notice ? `<p class="notice">${escapeHtml(state.notice)}</p>` : ''}
    </header>
    <main>${inner}</main>`
}

async function renderTaskView(): Promise<void> {
  const payload = await client.tasks(state.round)
  state.lexiconVersion = payload.lexicon_version
  if (state.currentTask) {
    const fresh = payload.tasks.find((t) => t.user_id === state.currentTask!.user_id)
    if (fresh) {
      state.currentTask = fresh
      if (!state.work || state.work.userId !== fresh.user_id) state.work = newWorkState(fresh)
      renderAnnotationScreen(fresh)
      return
    }
    state.currentTask = null
    state.work = null
  }
  const rows = payload.tasks
    .map((t) => {
      const mine = t.annotated_by.includes(state.annotator) ? ' ✓' : ''
      const locked = t.status !== 'open' ? ' (locked)' : ''
      return `<li><button data-task="${escapeHtml(t.user_id)}">${escapeHtml(t.user_id)}</button>${mine}${locked}</li>`
    })
    .join('')
  app.innerHTML = chrome(`<ul class="task-list">${rows || '<li>no tasks</li>'}</ul>`)
  wireChrome()
  app.querySelectorAll<HTMLButtonElement>('[data-task]').forEach((button) =>
    button.addEventListener('click', () => {
      const task = payload.tasks.find((t) => t.user_id === button.dataset.task)
      if (task) {
        state.currentTask = task
        state.work = newWorkState(task)
        state.anchor = null
        void refresh()
      }
    }),
  )
}

function renderAnnotationScreen(task: TaskView): void {
  const work = state.work!
  const mine = task.annotations?.[state.annotator] ?? null
  const submittedNote = mine
    ? `<p class="submitted">submitted ${mine.length} label(s); resubmitting replaces them</p>`
    : ''
  app.innerHTML = chrome(`
    <button data-back>← back to tasks</button>
    <h2>${escapeHtml(task.user_id)}</h2>
    <label><input type="checkbox" id="hide-pre" ${state.hidePre ? 'checked' : ''}> hide pre-annotations</label>
    ${renderTokens(task, work, state.hidePre)}
    <p class="hint">click a token to anchor a selection, click another to close it</p>
    <div id="selection-form"></div>
    ${renderAdded(work)}
    <h3>matcher pre-annotations</h3>
    ${renderPreAnnotations(task, work)}
    ${submittedNote}
    <button id="submit" ${task.status !== 'open' ? 'disabled' : ''}>submit annotation</button>
  `)
  wireChrome()
  app.querySelector('[data-back]')!.addEventListener('click', () => {
    state.currentTask = null
    state.work = null
    void refresh()
  })
  document.getElementById('hide-pre')!.addEventListener('change', (event) => {
    state.hidePre = (event.target as HTMLInputElement).checked
    renderAnnotationScreen(task)
  })
  app.querySelectorAll<HTMLElement>('[data-toggle]').forEach((button) =>
    button.addEventListener('click', () => {
      state.work = toggleDecision(work, Number(button.dataset.toggle))
      renderAnnotationScreen(task)
    }),
  )
  app.querySelectorAll<HTMLElement>('[data-remove]').forEach((button) =>
    button.addEventListener('click', () => {
      state.work = removeSelection(work, Number(button.dataset.remove))
      renderAnnotationScreen(task)
    }),
  )
  app.querySelectorAll<HTMLElement>('[data-token]').forEach((span) =>
    span.addEventListener('click', () => {
      const index = Number(span.dataset.token)
      if (state.anchor === null) {
        state.anchor = index
        span.classList.add('tok-anchor')
        return
      }
      const [start, end] = state.anchor <= index ? [state.anchor, index + 1] : [index, state.anchor + 1]
      state.anchor = null
      showSelectionForm(task, start, end)
    }),
  )
  document.getElementById('submit')!.addEventListener('click', () => void submit(task))
}

function showSelectionForm(task: TaskView, start: number, end: number): void {
  const draft = selectionFromRange(task, start, end)
  const form = document.getElementById('selection-form')!
  form.innerHTML = `<div class="selection">
    <strong>${escapeHtml(draft.term)}</strong> [${start}–${end}]
    <select id="sel-category">
      <option value="">choose category…</option>
      <option value="medication">medication</option>
      <option value="side_effect">side effect</option>
    </select>
    <label><input type="checkbox" id="sel-negated"> negated</label>
    <button id="sel-add">add</button>
  </div>`
  document.getElementById('sel-add')!.addEventListener('click', () => {
    const category = (document.getElementById('sel-category') as HTMLSelectElement).value
    const negated = (document.getElementById('sel-negated') as HTMLInputElement).checked
    try {
      state.work = addSelection(state.work!, {
        ...draft,
        category: (category || null) as Category | null,
        negated,
      })
      state.notice = ''
      renderAnnotationScreen(task)
    } catch (error) {
      if (error instanceof SelectionError) {
        state.notice = error.message
        renderAnnotationScreen(task)
      } else throw error
    }
  })
}

async function submit(task: TaskView): Promise<void> {
  try {
    const labels = buildSubmission(task, state.work!)
    await client.submitAnnotation(state.round, task.user_id, labels)
    state.notice = `submitted ${labels.length} label(s) for ${task.user_id}`
    state.currentTask = null
    state.work = null
  } catch (error) {
    if (error instanceof ApiError && error.status === 409) {
      state.notice = 'this round is locked; the task can no longer be annotated'
    } else {
      state.notice = String(error)
    }
  }
  await refresh()
}

async function renderDashboardView(): Promise<void> {
  const [health, agreementPayload, candidatePayload, history] = await Promise.all([
    client.health(),
    client.agreement(state.round).catch(() => null),
    client.candidates(),
    client.evalHistory(),
  ])
  state.lexiconVersion = candidatePayload.lexicon_version ?? health.lexicon_version
  candidates = candidateQueue(candidatePayload.candidates)
  const agreementHtml = agreementPayload
    ? renderAgreement(agreementTable(agreementPayload))
    : '<p class="empty">agreement needs at least two annotators with labels</p>'
  app.innerHTML = chrome(`
    <section><h2>pairwise agreement</h2>${agreementHtml}</section>
    <section><h2>lexicon candidates</h2>${renderCandidates(candidates)}</section>
    <section><h2>matcher F1 by lexicon version</h2>
      ${renderEvalChart(evalChart(history.entries), history.entries)}</section>
  `)
  wireChrome()
  app.querySelectorAll<HTMLElement>('[data-approve]').forEach((button) =>
    button.addEventListener('click', () => void approve(Number(button.dataset.approve))),
  )
}

async function approve(index: number): Promise<void> {
  const candidate = candidates[index]
  if (!candidate) return
  let functionalClass: string | undefined
  if (candidate.category === 'medication') {
    functionalClass =
      window.prompt(
        'functional class (hormone_therapy, chemotherapy, immune_checkpoint_inhibitor, kinase_inhibitor)',
      ) ?? undefined
    if (!functionalClass) return
  }
  try {
    const result = await client.approve({
      term: candidate.term,
      category: candidate.category,
      functional_class: functionalClass,
      round: state.round,
    })
    state.notice = `approved "${candidate.term}" → lexicon v${result.version}`
  } catch (error) {
    state.notice = String(error)
  }
  await refresh()
}

function wireChrome(): void {
  app.querySelectorAll<HTMLElement>('[data-view]').forEach((button) =>
    button.addEventListener('click', () => {
      state.view = button.dataset.view as 'tasks' | 'dashboard'
      state.currentTask = null
      state.work = null
      void refresh()
    }),
  )
}

void refresh()
