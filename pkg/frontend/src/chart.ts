// Precision-over-time chart as a generated SVG string: one series per
// language, months on the x-axis, drift alerts flagged with a marker.
// Languages without data are simply absent, never zero-filled.

import type { DriftAlert, MetricsBucket } from "./types.js";

const COLORS: Record<string, string> = {
  en: "#1f77b4",
  fr: "#d62728",
  ar: "#2ca02c",
};

export interface SeriesPoint {
  period: string;
  precision: number;
}

export function buildSeries(buckets: MetricsBucket[]): Map<string, SeriesPoint[]> {
  const series = new Map<string, SeriesPoint[]>();
  const ordered = [...buckets].sort(
    (a, b) => a.language.localeCompare(b.language) || a.period.localeCompare(b.period),
  );
  for (const bucket of ordered) {
    if (bucket.precision === null) continue;
    const points = series.get(bucket.language) ?? [];
    points.push({ period: bucket.period, precision: bucket.precision });
    series.set(bucket.language, points);
  }
  return series;
}

export function renderChart(
  buckets: MetricsBucket[],
  alerts: DriftAlert[],
  width = 640,
  height = 260,
): string {
  const series = buildSeries(buckets);
  if (!series.size) {
    return `<p class="empty">No precision metrics yet — submit reviews to populate them.</p>`;
  }
  const periods = [...new Set(buckets.map((b) => b.period))].sort();
  const flagged = new Set(alerts.map((a) => `${a.language}|${a.period}`));
  const pad = { left: 42, right: 12, top: 12, bottom: 34 };
  const plotW = width - pad.left - pad.right;
  const plotH = height - pad.top - pad.bottom;
  const x = (period: string) =>
    pad.left +
    (periods.length === 1 ? plotW / 2 : (periods.indexOf(period) * plotW) / (periods.length - 1));
  const y = (precision: number) => pad.top + (1 - precision) * plotH;

  const gridLines = [0, 0.25, 0.5, 0.75, 1.0]
    .map(
      (v) =>
        `<line x1="${pad.left}" y1="${y(v)}" x2="${width - pad.right}" y2="${y(v)}" ` +
        `class="grid"/><text x="4" y="${y(v) + 4}" class="tick">${v.toFixed(2)}</text>`,
    )
    .join("");
  const xLabels = periods
    .map(
      (p) =>
        `<text x="${x(p)}" y="${height - 10}" text-anchor="middle" class="tick">${p}</text>`,
    )
    .join("");

  const paths: string[] = [];
  for (const [language, points] of series) {
    const color = COLORS[language] ?? "#555";
    const d = points
      .map((pt, i) => `${i === 0 ? "M" : "L"}${x(pt.period).toFixed(1)},${y(pt.precision).toFixed(1)}`)
      .join(" ");
    paths.push(`<path d="${d}" fill="none" stroke="${color}" stroke-width="2" data-series="${language}"/>`);
    for (const pt of points) {
      const alerted = flagged.has(`${language}|${pt.period}`);
      paths.push(
        `<circle cx="${x(pt.period).toFixed(1)}" cy="${y(pt.precision).toFixed(1)}" r="3.2" ` +
          `fill="${color}" data-point="${language}:${pt.period}"/>`,
      );
      if (alerted) {
        paths.push(
          `<path d="M${(x(pt.period) - 6).toFixed(1)},${(y(pt.precision) - 10).toFixed(1)} ` +
            `h12 l-6 9 z" fill="${color}" stroke="black" stroke-width="0.8" ` +
            `class="alert-marker" data-alert="${language}:${pt.period}">` +
            `<title>drift alert ${language} ${pt.period}</title></path>`,
        );
      }
    }
    const last = points[points.length - 1];
    paths.push(
      `<text x="${(x(last.period) + 6).toFixed(1)}" y="${y(last.precision).toFixed(1)}" ` +
        `fill="${color}" class="series-label">${language}</text>`,
    );
  }

  return (
    `<svg viewBox="0 0 ${width} ${height}" role="img" ` +
    `aria-label="live precision per month and language">` +
    `${gridLines}${xLabels}${paths.join("")}</svg>`
  );
}
