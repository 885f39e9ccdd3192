// HTML renderers: plain template strings over the view models, with data-*
// hooks for the event wiring in main.ts.

import { tokenize } from './tokens'
import type { TaskWorkState } from './spans'
import type { AgreementTable, EvalChart } from './views'
import type { Candidate, EvalPoint, TaskView } from './types'

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;')
}

export function renderTokens(task: TaskView, state: TaskWorkState, hidePre: boolean): string {
  const tokens = tokenize(task.collapsed_text)
  const covered = new Map<number, { negated: boolean; accepted: boolean }>()
  if (!hidePre) {
    task.pre_annotations.forEach((pre, index) => {
      for (let i = pre.span[0]; i < pre.span[1]; i++) {
        covered.set(i, { negated: pre.negated, accepted: state.decisions[index] ?? true })
      }
    })
  }
  for (const sel of state.added) {
    for (let i = sel.range[0]; i < sel.range[1]; i++) {
      covered.set(i, { negated: sel.negated, accepted: true })
    }
  }
  const parts = tokens.map((token, i) => {
    const mark = covered.get(i)
    const classes = ['tok']
    if (mark) classes.push(mark.accepted ? 'tok-hit' : 'tok-rejected')
    if (mark?.negated) classes.push('tok-negated')
    const boundary = token.boundary ? '<span class="boundary"> · </span>' : ''
    return `<span class="${classes.join(' ')}" data-token="${i}">${escapeHtml(token.text)}</span>${boundary}`
  })
  return `<div class="tokens">${parts.join(' ')}</div>`
}

export function renderPreAnnotations(task: TaskView, state: TaskWorkState): string {
  if (task.pre_annotations.length === 0) {
    return '<p class="empty">no matcher pre-annotations for this profile</p>'
  }
  const rows = task.pre_annotations
    .map((pre, index) => {
      const accepted = state.decisions[index] ?? true
      return `<tr>
        <td>${escapeHtml(pre.matched_term)}</td>
        <td>${escapeHtml(pre.category)}</td>
        <td>${pre.span[0]}–${pre.span[1]}</td>
        <td>${pre.similarity.toFixed(2)}</td>
        <td>${pre.negated ? 'yes' : 'no'}</td>
        <td><button data-toggle="${index}">${accepted ? 'reject' : 'accept'}</button></td>
      </tr>`
    })
    .join('')
  return `<table class="pre-annotations">
    <thead><tr><th>term</th><th>category</th><th>span</th><th>sim</th><th>negated</th><th></th></tr></thead>
    <tbody>${rows}</tbody></table>`
}

export function renderAdded(state: TaskWorkState): string {
  if (state.added.length === 0) return ''
  const rows = state.added
    .map(
      (sel, index) => `<li>
        ${escapeHtml(sel.term)} <em>${escapeHtml(sel.category ?? '?')}</em>
        [${sel.range[0]}–${sel.range[1]}]${sel.negated ? ' (negated)' : ''}
        <button data-remove="${index}">×</button>
      </li>`,
    )
    .join('')
  return `<ul class="added">${rows}</ul>`
}

export function renderAgreement(table: AgreementTable): string {
  const header = table.annotators.map((a) => `<th>${escapeHtml(a)}</th>`).join('')
  const body = table.annotators
    .map((row, i) => {
      const cells = table.cells[i]!.map((c) => `<td>${c}</td>`).join('')
      return `<tr><th>${escapeHtml(row)}</th>${cells}</tr>`
    })
    .join('')
  const warnings = table.warnings.map((w) => `<p class="warning">${escapeHtml(w)}</p>`).join('')
  return `<table class="agreement"><thead><tr><th></th>${header}</tr></thead>
    <tbody>${body}</tbody></table>
    <p>mean κ = <strong data-mean-kappa>${table.mean}</strong></p>${warnings}`
}

export function renderCandidates(candidates: Candidate[]): string {
  if (candidates.length === 0) return '<p class="empty">no pending candidates</p>'
  const rows = candidates
    .map(
      (c, index) => `<tr>
        <td>${escapeHtml(c.term)}</td><td>${escapeHtml(c.category)}</td>
        <td>${c.count}</td>
        <td><button data-approve="${index}">approve</button></td>
      </tr>`,
    )
    .join('')
  return `<table class="candidates">
    <thead><tr><th>term</th><th>category</th><th>profiles</th><th></th></tr></thead>
    <tbody>${rows}</tbody></table>`
}

export function renderEvalChart(chart: EvalChart, entries: EvalPoint[]): string {
  if (entries.length === 0) return '<p class="empty">no evaluation runs yet</p>'
  const dots = chart.points
    .map(
      (p) => `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="4"
        class="${p.pending ? 'dot-pending' : 'dot'}"><title>v${p.version}: ${p.label}</title></circle>`,
    )
    .join('')
  const labels = chart.points
    .map(
      (p) =>
        `<text x="${p.x.toFixed(1)}" y="${chart.height - 6}" text-anchor="middle">v${p.version}</text>`,
    )
    .join('')
  return `<svg viewBox="0 0 ${chart.width} ${chart.height}" class="eval-chart">
    <path d="${chart.path}" fill="none" class="line"/>${dots}${labels}</svg>`
}
