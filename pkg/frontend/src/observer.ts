// Observer session: one pair at a time, exactly one choice per pair.
// The server reports which pairs this annotator already answered, so a
// refreshed session resumes at the first unanswered pair.

import { ApiError, StudyClient } from "./api"
import type { BatchPairEntry, Choice } from "./types"

export type ObserverPhase =
  | "loading"
  | "active"
  | "batch_done"
  | "study_complete"
  | "terminal_error"

export interface ObserverView {
  phase: ObserverPhase
  message: string
  pair: BatchPairEntry | null
  answered: number
  total: number
  iteration: number
}

export class ObserverSession {
  private client: StudyClient
  private studyId: string
  private annotator: string
  private pairs: BatchPairEntry[] = []
  private cursor = 0
  private iteration = 0
  private phase: ObserverPhase = "loading"
  private message = ""
  private submitting = false

  constructor(client: StudyClient, studyId: string, annotator: string) {
    this.client = client
    this.studyId = studyId
    this.annotator = annotator
  }

  async load(): Promise<ObserverView> {
    this.phase = "loading"
    try {
      const batch = await this.client.getBatch(this.studyId, this.annotator)
      this.iteration = batch.iteration
      if (batch.complete) {
        this.phase = "study_complete"
        this.message = "study complete: the comparison budget is exhausted"
        this.pairs = []
        return this.view()
      }
      this.pairs = batch.pairs
      this.cursor = this.pairs.findIndex((p) => !p.answered)
      if (this.cursor < 0) {
        this.cursor = this.pairs.length
        this.phase = "batch_done"
        this.message = "all pairs answered; waiting for the next round"
      } else {
        this.phase = "active"
        this.message = ""
      }
    } catch (error) {
      this.fail(error)
    }
    return this.view()
  }

  async submit(choice: Choice): Promise<ObserverView> {
    if (this.phase !== "active" || this.submitting) return this.view()
    const pair = this.pairs[this.cursor]
    this.submitting = true
    try {
      await this.client.postResponse(
        this.studyId,
        pair.i,
        pair.j,
        choice,
        this.annotator,
      )
      pair.answered = true
      this.cursor += 1
      if (this.cursor >= this.pairs.length) {
        this.phase = "batch_done"
        this.message = "all pairs answered; waiting for the next round"
      }
    } catch (error) {
      this.fail(error)
    } finally {
      this.submitting = false
    }
    return this.view()
  }

  private fail(error: unknown): void {
    if (error instanceof ApiError && error.status === 423) {
      this.phase = "study_complete"
      this.message = "study complete: the comparison budget is exhausted"
    } else if (error instanceof ApiError && error.status === 409) {
      this.phase = "terminal_error"
      this.message = `session conflict (409): ${error.detail}`
    } else if (error instanceof ApiError) {
      this.phase = "terminal_error"
      this.message = error.message
    } else {
      this.phase = "terminal_error"
      this.message = `service unreachable: ${String(error)}`
    }
  }

  view(): ObserverView {
    const answered = this.pairs.filter((p) => p.answered).length
    return {
      phase: this.phase,
      message: this.message,
      pair:
        this.phase === "active" && this.cursor < this.pairs.length
          ? this.pairs[this.cursor]
          : null,
      answered,
      total: this.pairs.length,
      iteration: this.iteration,
    }
  }
}
