// Experimenter dashboard model: pure builders from service payloads.
// Every displayed number is lifted directly from a service response
// field (score, covariance diagonal, EIG, counts); nothing is invented
// client-side, and server-provided orderings are preserved.

import { ApiError, StudyClient } from "./api"
import type { BatchPayload, EstimatePayload } from "./types"

export interface RankingRow {
  id: string
  score: number
  sigma: number
  // half-width of the +-2 sqrt(cov_ii) error bar
  errorBar: number
}

export interface PairRow {
  label: string
  eig: number
  responses: number
}

export interface BudgetGauge {
  completed: number
  total: number
  label: string
}

export function buildRanking(payload: EstimatePayload): RankingRow[] {
  const est = payload.estimate
  const n = est.stimulus_ids.length
  const rows = est.stimulus_ids.map((id, k) => ({
    id,
    score: est.s_hat[k],
    sigma: est.sigma_hat[k],
    errorBar: 2 * Math.sqrt(est.covariance[k * n + k]),
  }))
  rows.sort((a, b) => b.score - a.score)
  return rows
}

export function buildPairTable(batch: BatchPayload): PairRow[] {
  // served order is already EIG-descending; keep it
  return batch.pairs.map((p) => ({
    label: `${p.i} vs ${p.j}`,
    eig: p.eig,
    responses: p.responses,
  }))
}

export function buildBudget(batch: BatchPayload): BudgetGauge {
  const completed = batch.budget.completed_iterations
  const total = batch.budget.n_itr
  return {
    completed,
    total,
    label: `iteration ${completed} of ${total} (${batch.budget.n_pc} pairs per round)`,
  }
}

export interface DashboardState {
  ranking: RankingRow[]
  pairs: PairRow[]
  budget: BudgetGauge | null
  complete: boolean
  advanceEnabled: boolean
  notice: string
  stale: boolean
  lastFetch: number | null
}

export class DashboardModel {
  private client: StudyClient
  private studyId: string
  state: DashboardState = {
    ranking: [],
    pairs: [],
    budget: null,
    complete: false,
    advanceEnabled: false,
    notice: "",
    stale: false,
    lastFetch: null,
  }

  constructor(client: StudyClient, studyId: string) {
    this.client = client
    this.studyId = studyId
  }

  async refresh(now: number = Date.now()): Promise<DashboardState> {
    try {
      const [estimate, batch] = await Promise.all([
        this.client.getEstimate(this.studyId),
        this.client.getBatch(this.studyId),
      ])
      this.state = {
        ranking: buildRanking(estimate),
        pairs: buildPairTable(batch),
        budget: buildBudget(batch),
        complete: batch.complete,
        advanceEnabled: !batch.complete,
        notice: batch.complete
          ? "budget exhausted: the study is complete"
          : "",
        stale: false,
        lastFetch: now,
      }
    } catch (error) {
      // keep showing the last data, flag it as stale
      this.state = {
        ...this.state,
        stale: true,
        notice: `service unreachable (${String(
          error instanceof Error ? error.message : error,
        )}); showing data from last successful fetch`,
      }
    }
    return this.state
  }

  async advance(): Promise<DashboardState> {
    if (!this.state.advanceEnabled) return this.state
    try {
      await this.client.advance(this.studyId)
    } catch (error) {
      if (error instanceof ApiError && error.status === 423) {
        this.state = {
          ...this.state,
          complete: true,
          advanceEnabled: false,
          notice: "budget exhausted: the study is complete",
        }
        return this.state
      }
      this.state = { ...this.state, notice: String(error) }
      return this.state
    }
    return this.refresh()
  }
}

export function startPolling(
  model: DashboardModel,
  onUpdate: (state: DashboardState) => void,
  intervalMs = 5000,
  schedule: (fn: () => void, ms: number) => unknown = setTimeout,
): () => void {
  let stopped = false
  const tick = async () => {
    if (stopped) return
    onUpdate(await model.refresh())
    if (!stopped) schedule(tick, intervalMs)
  }
  void tick()
  return () => {
    stopped = true
  }
}
