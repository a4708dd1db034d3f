// Payload shapes served by the study backend. Field names match the
// service JSON exactly; the UI never invents values beyond these.

export interface BudgetInfo {
  n_pc: number
  n_itr: number
  completed_iterations: number
}

export interface BatchPairEntry {
  i: string
  j: string
  eig: number
  first: string
  second: string
  responses: number
  answered?: boolean
}

export interface BatchPayload {
  study_id: string
  complete: boolean
  iteration: number
  budget: BudgetInfo
  pairs: BatchPairEntry[]
}

export interface EstimateBody {
  model: string
  stimulus_ids: string[]
  s_hat: number[]
  sigma_hat: number[]
  covariance: number[]
  log_likelihood: number
  converged: boolean
}

export interface EstimatePayload {
  study_id: string
  iteration: number
  estimate: EstimateBody
}

export interface ResponseAccepted {
  accepted: boolean
  iteration: number
  winner: string
}

export interface AdvancePayload {
  iteration: number
  complete: boolean
  digest: string
}

export interface HistoryPayload {
  study_id: string
  iteration: number
  digest: string
  records: unknown[]
}

export interface CreateStudyBody {
  stimulus_ids?: string[]
  acr_csv?: string
  config: Record<string, unknown>
}

export type Choice = "first" | "second"
