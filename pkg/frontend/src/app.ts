// DOM wiring: start form, annotation view, completion screen.

import { AnnotationApi } from "./api.js"
import { SessionFlow } from "./state.js"
import { histogramBars, sparklinePoints } from "./sparkline.js"

const MAX_NEIGHBOR_ROWS = 10

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing #${id}`)
  return node as T
}

let flow: SessionFlow | null = null

function showBanner(message: string | null): void {
  const banner = el<HTMLDivElement>("banner")
  banner.textContent = message ?? ""
  banner.style.display = message ? "block" : "none"
}

function probBars(probs: number[] | null, classes: string[]): string {
  if (!probs) return "<em>discrete output</em>"
  return probs
    .map((p, i) => {
      const pct = (p * 100).toFixed(1)
      return `<div class="bar-row"><span class="bar-label">${classes[i] ?? i}</span>` +
        `<div class="bar"><div class="bar-fill" style="width:${pct}%"></div></div>` +
        `<span class="bar-pct">${pct}%</span></div>`
    })
    .join("")
}

function renderSuggestion(): void {
  if (!flow) return
  const view = el<HTMLDivElement>("annotation-view")
  const done = el<HTMLDivElement>("done-view")
  if (flow.phase === "done") {
    view.style.display = "none"
    done.style.display = "block"
    el<HTMLSpanElement>("final-mca").textContent =
      flow.stats.mca === null ? "n/a" : flow.stats.mca.toFixed(4)
    return
  }
  const s = flow.suggestion
  if (!s) return
  view.style.display = "block"
  done.style.display = "none"
  el<HTMLDivElement>("example-text").textContent = s.text ?? `(example ${s.example_id})`
  el<HTMLSpanElement>("suggested-class").textContent = s.suggested_class
  el<HTMLSpanElement>("lambda-value").textContent = s.lambda.toFixed(3)
  el<HTMLDivElement>("lambda-fill").style.width = `${(s.lambda * 100).toFixed(1)}%`
  el<HTMLDivElement>("f-probs").innerHTML = probBars(s.f_probs, flow.classes)
  el<HTMLDivElement>("g-probs").innerHTML = probBars(s.g_probs, flow.classes)

  const rows = s.neighbors.slice(0, MAX_NEIGHBOR_ROWS).map(
    (n) => `<tr><td>${n.text ?? "—"}</td><td>${n.label}</td><td>${n.distance.toFixed(3)}</td></tr>`)
  el<HTMLTableSectionElement>("neighbor-rows").innerHTML = rows.join("")

  const buttons = flow.classes.map((name, i) => {
    const highlight = name === s.suggested_class ? " suggested" : ""
    return `<button class="class-btn${highlight}" data-label="${name}">${i + 1}. ${name}</button>`
  })
  const panel = el<HTMLDivElement>("class-buttons")
  panel.innerHTML = buttons.join("")
  panel.querySelectorAll<HTMLButtonElement>("button").forEach((btn) => {
    btn.addEventListener("click", () => void submit(btn.dataset.label as string))
  })
}

function renderStats(): void {
  if (!flow) return
  el<HTMLSpanElement>("stat-total").textContent = String(flow.stats.total)
  el<HTMLSpanElement>("stat-correct").textContent = String(flow.stats.correct)
  el<HTMLSpanElement>("stat-mca").textContent =
    flow.stats.mca === null ? "—" : flow.stats.mca.toFixed(4)
  el<HTMLSpanElement>("stat-store").textContent = String(flow.stats.datastoreSize)
  const line = el<SVGPolylineElement & HTMLElement>("mca-sparkline")
  line.setAttribute("points", sparklinePoints(flow.stats.mcaSeries, 180, 40))
  const bars = histogramBars(flow.stats.lambdaHistogram)
  el<HTMLDivElement>("lambda-hist").innerHTML = bars
    .map((h) => `<div class="hist-bar" style="height:${(h * 100).toFixed(0)}%"></div>`)
    .join("")
}

async function submit(label: string): Promise<void> {
  if (!flow) return
  const applied = await flow.decide(label)
  if (!applied && flow.lastError) showBanner(flow.lastError)
  renderSuggestion()
  renderStats()
}

async function startSession(): Promise<void> {
  showBanner(null)
  const base = el<HTMLInputElement>("base-url").value
  const corpus = el<HTMLInputElement>("corpus-name").value
  const config: Record<string, unknown> = {
    k: Number(el<HTMLInputElement>("cfg-k").value),
    capacity: Number(el<HTMLInputElement>("cfg-capacity").value),
    batch_size: Number(el<HTMLInputElement>("cfg-batch").value),
    eviction: el<HTMLSelectElement>("cfg-eviction").value,
    ordering: el<HTMLSelectElement>("cfg-ordering").value,
    seed: Number(el<HTMLInputElement>("cfg-seed").value),
  }
  flow = new SessionFlow(new AnnotationApi(base))
  try {
    await flow.start(corpus, config)
    el<HTMLDivElement>("config-view").style.display = "none"
    renderSuggestion()
    renderStats()
  } catch {
    showBanner(flow.lastError ?? "could not reach the service — check the URL and retry")
  }
}

function onKey(event: KeyboardEvent): void {
  if (!flow || flow.phase !== "annotating") return
  if (event.target instanceof HTMLInputElement) return
  if (event.key === "Enter") {
    event.preventDefault()
    void flow.accept().then(() => {
      renderSuggestion()
      renderStats()
    })
    return
  }
  const digit = Number(event.key)
  if (Number.isInteger(digit) && digit >= 1 && digit <= flow.classes.length) {
    event.preventDefault()
    void submit(flow.classes[digit - 1])
  }
}

export function mount(): void {
  el<HTMLButtonElement>("start-btn").addEventListener("click", () => void startSession())
  document.addEventListener("keydown", onKey)
}

if (typeof document !== "undefined" && document.getElementById("start-btn")) {
  mount()
}
