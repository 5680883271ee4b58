// Session flow state machine, kept free of DOM so it is directly testable.
//
// Invariants enforced here: exactly one pending suggestion at a time, no
// decision submitted twice for one example, and every displayed MCA is a
// value the service returned (never recomputed client-side).

import {
  AnnotationApi,
  ApiError,
  MetricsPayload,
  SuggestionPayload,
} from "./api.js"

export type Phase = "config" | "annotating" | "done" | "error"

export interface SessionStats {
  total: number
  correct: number
  mca: number | null
  mcaSeries: number[]
  lambdaHistogram: number[]
  datastoreSize: number
}

const emptyStats = (): SessionStats => ({
  total: 0,
  correct: 0,
  mca: null,
  mcaSeries: [],
  lambdaHistogram: [],
  datastoreSize: 0,
})

export class SessionFlow {
  api: AnnotationApi
  phase: Phase = "config"
  sessionId: string | null = null
  classes: string[] = []
  suggestion: SuggestionPayload | null = null
  stats: SessionStats = emptyStats()
  lastError: string | null = null
  private busy = false

  constructor(api: AnnotationApi) {
    this.api = api
  }

  async start(corpus: string, config: Record<string, unknown>): Promise<void> {
    try {
      const created = await this.api.createSession(corpus, config)
      this.sessionId = created.id
      this.classes = created.classes
      this.stats = emptyStats()
      this.phase = "annotating"
      this.lastError = null
      await this.fetchNext()
    } catch (err) {
      this.phase = "config"
      this.lastError = describe(err)
      throw err
    }
  }

  /** Accept the current suggestion verbatim. */
  async accept(): Promise<boolean> {
    if (!this.suggestion) return false
    return this.decide(this.suggestion.suggested_class)
  }

  /**
   * Submit a decision for the pending suggestion. Returns false when there
   * is nothing to decide or a submission is already in flight (so a held-down
   * Enter key cannot double-submit).
   */
  async decide(label: string): Promise<boolean> {
    if (this.phase !== "annotating" || this.busy || !this.suggestion || !this.sessionId) {
      return false
    }
    if (!this.classes.includes(label)) {
      this.lastError = `unknown class ${label}`
      return false
    }
    this.busy = true
    const exampleId = this.suggestion.example_id
    try {
      const result = await this.api.postFeedback(this.sessionId, exampleId, label)
      this.stats.total = result.total
      this.stats.correct = result.correct
      this.stats.mca = result.mca
      this.stats.mcaSeries.push(result.mca)
      this.suggestion = null
      await this.refreshMetrics()
      await this.fetchNext()
      return true
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Someone else resolved this example; silently refetch the pending one.
        this.suggestion = null
        await this.fetchNext()
        return false
      }
      this.lastError = describe(err)
      return false
    } finally {
      this.busy = false
    }
  }

  async fetchNext(): Promise<void> {
    if (!this.sessionId) return
    const next = await this.api.nextSuggestion(this.sessionId)
    if (next === null) {
      this.suggestion = null
      this.phase = "done"
      await this.refreshMetrics()
    } else {
      this.suggestion = next
      this.phase = "annotating"
    }
  }

  async refreshMetrics(): Promise<MetricsPayload | null> {
    if (!this.sessionId) return null
    const metrics = await this.api.metrics(this.sessionId)
    this.stats.total = metrics.total
    this.stats.correct = metrics.correct
    this.stats.mca = metrics.mca
    this.stats.lambdaHistogram = metrics.lambda_histogram
    this.stats.datastoreSize = metrics.datastore_size
    return metrics
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `service error ${err.status}: ${err.body}`
  if (err instanceof Error) return err.message
  return String(err)
}
