// HTML-string renderers for the dashboard and observer screens.
// Pure functions of the model state so they can be tested in node.

import type { DashboardState, PairRow, RankingRow } from "./dashboard"
import type { ObserverView } from "./observer"

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
}

export function renderRanking(rows: RankingRow[]): string {
  const body = rows
    .map(
      (r) => `
    <tr>
      <td>${escapeHtml(r.id)}</td>
      <td>${r.score.toFixed(4)}</td>
      <td>${r.sigma.toFixed(4)}</td>
      <td><span class="bar" data-halfwidth="${r.errorBar}">±${r.errorBar.toFixed(4)}</span></td>
    </tr>`,
    )
    .join("")
  return `<table class="ranking">
    <thead><tr><th>stimulus</th><th>score</th><th>dispersion</th><th>error bar</th></tr></thead>
    <tbody>${body}</tbody></table>`
}

export function renderPairTable(rows: PairRow[]): string {
  const body = rows
    .map(
      (r) => `
    <tr><td>${escapeHtml(r.label)}</td><td>${r.eig.toFixed(6)}</td><td>${r.responses}</td></tr>`,
    )
    .join("")
  return `<table class="pairs">
    <thead><tr><th>pair</th><th>EIG</th><th>responses</th></tr></thead>
    <tbody>${body}</tbody></table>`
}

export function renderDashboard(state: DashboardState): string {
  const notice = state.notice
    ? `<div class="notice${state.stale ? " stale" : ""}">${escapeHtml(state.notice)}${
        state.stale && state.lastFetch
          ? ` (last fetch ${new Date(state.lastFetch).toISOString()})`
          : ""
      }</div>`
    : ""
  const gauge = state.budget
    ? `<div class="budget">${escapeHtml(state.budget.label)}</div>`
    : ""
  const advance = `<button id="advance" ${state.advanceEnabled ? "" : "disabled"}>advance</button>`
  return `${notice}${gauge}
    <h2>recovered scale</h2>${renderRanking(state.ranking)}
    <h2>outstanding pairs</h2>${renderPairTable(state.pairs)}
    ${advance}`
}

export function renderObserver(view: ObserverView): string {
  if (view.phase === "loading") return `<div class="status">loading…</div>`
  if (view.phase === "active" && view.pair) {
    return `<div class="progress">pair ${view.answered + 1} of ${view.total} (round ${view.iteration})</div>
    <div class="pair">
      <div class="stimulus" data-side="first">${escapeHtml(view.pair.first)}</div>
      <div class="stimulus" data-side="second">${escapeHtml(view.pair.second)}</div>
    </div>
    <div class="choices">
      <button id="choose-first">left is better</button>
      <button id="choose-second">right is better</button>
    </div>`
  }
  return `<div class="terminal">${escapeHtml(view.message)}</div>`
}
