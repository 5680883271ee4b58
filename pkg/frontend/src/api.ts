// Typed client for the annotation service REST API.

export interface SessionConfigPayload {
  k?: number
  capacity?: number
  eviction?: string
  batch_size?: number
  ordering?: string
  lambda_mode?: string
  seed?: number
  [key: string]: unknown
}

export interface CreatedSession {
  id: string
  classes: string[]
}

export interface NeighborView {
  text: string | null
  label: string
  distance: number
}

export interface SuggestionPayload {
  example_id: string
  text: string | null
  suggested_class: string
  lambda: number
  f_probs: number[] | null
  g_probs: number[] | null
  neighbors: NeighborView[]
}

export interface FeedbackResult {
  total: number
  correct: number
  mca: number
}

export interface MetricsPayload {
  total: number
  correct: number
  mca: number | null
  lambda_histogram: number[]
  datastore_size: number
}

export class ApiError extends Error {
  status: number
  body: string

  constructor(status: number, body: string) {
    super(`service replied ${status}: ${body}`)
    this.status = status
    this.body = body
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text())
  }
  return (await resp.json()) as T
}

export class AnnotationApi {
  baseUrl: string

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "")
  }

  async createSession(corpus: string, config: SessionConfigPayload): Promise<CreatedSession> {
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ corpus, config }),
    })
    return expectJson<CreatedSession>(resp)
  }

  /** Pending suggestion, or null when the pool is exhausted (204). */
  async nextSuggestion(sessionId: string): Promise<SuggestionPayload | null> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/next`)
    if (resp.status === 204) return null
    return expectJson<SuggestionPayload>(resp)
  }

  async postFeedback(sessionId: string, exampleId: string, label: string): Promise<FeedbackResult> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/feedback`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ example_id: exampleId, label }),
    })
    return expectJson<FeedbackResult>(resp)
  }

  async metrics(sessionId: string): Promise<MetricsPayload> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/metrics`)
    return expectJson<MetricsPayload>(resp)
  }
}
