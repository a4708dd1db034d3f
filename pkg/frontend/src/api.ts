// Thin typed client over the study service HTTP API.
// `fetchFn` is injectable so tests can replay recorded fixtures.

import type {
  AdvancePayload,
  BatchPayload,
  Choice,
  CreateStudyBody,
  EstimatePayload,
  HistoryPayload,
  ResponseAccepted,
} from "./types"

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export class ApiError extends Error {
  status: number
  detail: string

  constructor(status: number, detail: string) {
    super(`service returned ${status}: ${detail}`)
    this.status = status
    this.detail = detail
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return
  let detail = response.statusText
  try {
    const body = await response.json()
    if (body && typeof body.detail === "string") detail = body.detail
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail)
}

export class StudyClient {
  baseUrl: string
  private fetchFn: FetchLike

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "")
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init))
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path)
    await raiseForStatus(response)
    return (await response.json()) as T
  }

  private async postJson<T>(path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    await raiseForStatus(response)
    return (await response.json()) as T
  }

  createStudy(body: CreateStudyBody): Promise<{ study_id: string }> {
    return this.postJson("/studies", body)
  }

  getBatch(studyId: string, annotator?: string): Promise<BatchPayload> {
    const query = annotator ? `?annotator=${encodeURIComponent(annotator)}` : ""
    return this.getJson(`/studies/${studyId}/batch${query}`)
  }

  postResponse(
    studyId: string,
    i: string,
    j: string,
    choice: Choice,
    annotator: string,
  ): Promise<ResponseAccepted> {
    return this.postJson(`/studies/${studyId}/responses`, {
      i,
      j,
      choice,
      annotator,
    })
  }

  advance(studyId: string): Promise<AdvancePayload> {
    return this.postJson(`/studies/${studyId}/advance`)
  }

  getEstimate(studyId: string): Promise<EstimatePayload> {
    return this.getJson(`/studies/${studyId}/estimate`)
  }

  getHistory(studyId: string): Promise<HistoryPayload> {
    return this.getJson(`/studies/${studyId}/history`)
  }
}
