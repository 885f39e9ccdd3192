// Working state for annotating one task: accept/reject decisions over the
// matcher's pre-annotations plus manually added span selections.  All
// mutations return new state; the server response is the only persistence.

import { tokenTexts } from './tokens'
import type { Category, LabelPayload, TaskView } from './types'

export interface SpanSelection {
  range: [number, number] // half-open token range
  category: Category | null
  term: string
  entryId: string | null
  negated: boolean
}

export interface TaskWorkState {
  userId: string
  tokenCount: number
  /** acceptance per pre-annotation, index-aligned with task.pre_annotations */
  decisions: boolean[]
  added: SpanSelection[]
}

export function newWorkState(task: TaskView): TaskWorkState {
  return {
    userId: task.user_id,
    tokenCount: tokenTexts(task.collapsed_text).length,
    decisions: task.pre_annotations.map(() => true),
    added: [],
  }
}

export function toggleDecision(state: TaskWorkState, index: number): TaskWorkState {
  if (index < 0 || index >= state.decisions.length) return state
  const decisions = state.decisions.slice()
  decisions[index] = !decisions[index]
  return { ...state, decisions }
}

export class SelectionError extends Error {}

/** Validate and append a manual selection; the range must sit inside the
 * task text and a category must be chosen before submit. */
export function addSelection(state: TaskWorkState, selection: SpanSelection): TaskWorkState {
  const [start, end] = selection.range
  if (!(Number.isInteger(start) && Number.isInteger(end)) || start < 0 || end <= start) {
    throw new SelectionError(`invalid token range ${start}..${end}`)
  }
  if (end > state.tokenCount) {
    throw new SelectionError(`range ${start}..${end} is outside the task text`)
  }
  if (selection.category === null) {
    throw new SelectionError('a category is required before submitting')
  }
  if (!selection.term.trim()) {
    throw new SelectionError('an empty term cannot be submitted')
  }
  return { ...state, added: [...state.added, selection] }
}

export function removeSelection(state: TaskWorkState, index: number): TaskWorkState {
  return { ...state, added: state.added.filter((_, i) => i !== index) }
}

/** Selection prefilled from a token range of the task text. */
export function selectionFromRange(
  task: TaskView,
  start: number,
  end: number,
): SpanSelection {
  const tokens = tokenTexts(task.collapsed_text)
  return {
    range: [start, end],
    category: null,
    term: tokens.slice(start, end).join(' '),
    entryId: null,
    negated: false,
  }
}

/** Labels POSTed to the server: accepted pre-annotations keep their entry
 * ids and spans; added selections carry free text unless an entry was
 * picked. */
export function buildSubmission(task: TaskView, state: TaskWorkState): LabelPayload[] {
  const labels: LabelPayload[] = []
  task.pre_annotations.forEach((pre, index) => {
    if (!state.decisions[index]) return
    labels.push({
      category: pre.category,
      term: pre.matched_term,
      negated: pre.negated,
      entry_id: pre.entry_id,
      span: pre.span,
    })
  })
  for (const sel of state.added) {
    labels.push({
      category: sel.category as Category,
      term: sel.term,
      negated: sel.negated,
      entry_id: sel.entryId,
      span: sel.range,
    })
  }
  return labels
}

/** Canonical form for round-trip comparison: category/term/negated/entry
 * triples sorted, span-normalized. */
export function canonicalSpans(labels: LabelPayload[]): string[] {
  return labels
    .map((l) =>
      JSON.stringify({
        category: l.category,
        term: l.term,
        negated: l.negated,
        entry_id: l.entry_id ?? null,
        span: l.span ?? null,
      }),
    )
    .sort()
}

export function sameSpans(a: LabelPayload[], b: LabelPayload[]): boolean {
  const ca = canonicalSpans(a)
  const cb = canonicalSpans(b)
  return ca.length === cb.length && ca.every((v, i) => v === cb[i])
}
