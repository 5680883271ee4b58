// Tiny SVG helpers for the MCA sparkline and the lambda histogram.

/** Map a [0,1]-valued series onto SVG polyline points. */
export function sparklinePoints(values: number[], width: number, height: number): string {
  if (values.length === 0) return ""
  if (values.length === 1) {
    const y = (1 - values[0]) * (height - 2) + 1
    return `0,${y.toFixed(2)} ${width},${y.toFixed(2)}`
  }
  const step = width / (values.length - 1)
  return values
    .map((v, i) => {
      const clamped = Math.max(0, Math.min(1, v))
      const y = (1 - clamped) * (height - 2) + 1
      return `${(i * step).toFixed(2)},${y.toFixed(2)}`
    })
    .join(" ")
}

/** Normalized bar heights (0..1) for a histogram of counts. */
export function histogramBars(counts: number[]): number[] {
  const top = Math.max(...counts, 1)
  return counts.map((c) => c / top)
}
