/** Pure renderers: state in, HTML/SVG strings out. Every number drawn here is
 * copied from a service payload (and echoed into data- attributes so tests can
 * trace each pixel back to its field); the only arithmetic is linear scaling
 * to pixels and the documented mean +- 2*sqrt(variance) band. */

import type { Banner, ControllerState } from "./state";
import type {
  PredictionPoint,
  RewardBar,
  TargetPrediction,
  VariableInfo,
} from "./types";

const BAR_AREA_W = 420;
const BAR_H = 22;
const LABEL_W = 120;
const PAD = 10;

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(x: number): string {
  if (x === 0) {
    return "0";
  }
  const a = Math.abs(x);
  if (a >= 1000 || a < 0.001) {
    return x.toExponential(3);
  }
  return x.toPrecision(4);
}

function px(x: number): string {
  return x.toFixed(2);
}

/** Horizontal bar chart of reward estimates, one row per candidate, in the
 * exact order the service returned them. Whiskers span value +- stderr. */
export function renderRewardChart(rewards: RewardBar[], recommended: string | null): string {
  if (rewards.length === 0) {
    return '<p class="empty">no candidates left</p>';
  }
  let lo = 0;
  let hi = 0;
  for (const r of rewards) {
    lo = Math.min(lo, r.value - r.stderr);
    hi = Math.max(hi, r.value + r.stderr);
  }
  const span = hi - lo || 1;
  const x = (t: number): number => LABEL_W + PAD + ((t - lo) / span) * BAR_AREA_W;
  const width = LABEL_W + 2 * PAD + BAR_AREA_W;
  const height = rewards.length * BAR_H + PAD;
  const rows = rewards.map((r, i) => {
    const y = PAD / 2 + i * BAR_H;
    const mid = y + BAR_H / 2;
    const x0 = x(0);
    const xv = x(r.value);
    const isBest = r.variable === recommended;
    const name = escapeHtml(r.variable);
    return [
      `<g class="reward-row${isBest ? " reward-row--recommended" : ""}" ` +
        `data-variable="${name}" data-value="${r.value}" data-stderr="${r.stderr}">`,
      `<title>${name}: ${fmt(r.value)} &#177; ${fmt(r.stderr)}</title>`,
      `<text class="reward-label" x="${px(LABEL_W)}" y="${px(mid + 4)}" text-anchor="end">${name}</text>`,
      `<rect class="reward-bar" x="${px(Math.min(x0, xv))}" y="${px(y + 4)}" ` +
        `width="${px(Math.abs(xv - x0))}" height="${px(BAR_H - 8)}"></rect>`,
      `<line class="reward-whisker" x1="${px(x(r.value - r.stderr))}" y1="${px(mid)}" ` +
        `x2="${px(x(r.value + r.stderr))}" y2="${px(mid)}"></line>`,
      `<line class="reward-cap" x1="${px(x(r.value - r.stderr))}" y1="${px(mid - 4)}" ` +
        `x2="${px(x(r.value - r.stderr))}" y2="${px(mid + 4)}"></line>`,
      `<line class="reward-cap" x1="${px(x(r.value + r.stderr))}" y1="${px(mid - 4)}" ` +
        `x2="${px(x(r.value + r.stderr))}" y2="${px(mid + 4)}"></line>`,
      `</g>`,
    ].join("");
  });
  const axis =
    `<line class="reward-axis" x1="${px(x(0))}" y1="0" x2="${px(x(0))}" y2="${px(height)}"></line>`;
  return (
    `<svg class="reward-chart" role="img" aria-label="information reward per question" ` +
    `viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    axis +
    rows.join("") +
    `</svg>`
  );
}

/** Per-target predictive mean with a mean +- 2*sqrt(variance) band. */
export function renderPrediction(prediction: TargetPrediction[]): string {
  const blocks = prediction.map((p) => {
    const sd = Math.sqrt(p.variance);
    const body = renderBand(p.mean, sd);
    return (
      `<div class="target" data-target="${escapeHtml(p.target)}" ` +
      `data-mean="${p.mean}" data-variance="${p.variance}">` +
      `<h3>${escapeHtml(p.target)}</h3>` +
      `<p class="target-numbers">mean ${fmt(p.mean)}, band &#177; ${fmt(2 * sd)}</p>` +
      body +
      `</div>`
    );
  });
  return `<div class="prediction">${blocks.join("")}</div>`;
}

function renderBand(mean: number, sd: number): string {
  const w = 360;
  const h = 34;
  const lo = mean - 3 * sd;
  const span = 6 * sd || 1;
  const x = (t: number): number => PAD + ((t - lo) / span) * (w - 2 * PAD);
  return (
    `<svg class="band" role="img" aria-label="prediction with uncertainty band" ` +
    `viewBox="0 0 ${w} ${h}" width="${w}" height="${h}">` +
    `<rect class="band-range" x="${px(x(mean - 2 * sd))}" y="8" ` +
    `width="${px(x(mean + 2 * sd) - x(mean - 2 * sd))}" height="${h - 16}"></rect>` +
    `<line class="band-mean" x1="${px(x(mean))}" y1="4" x2="${px(x(mean))}" y2="${h - 4}"></line>` +
    `</svg>`
  );
}

/** Mean line and band across answered steps, one chart per target. */
export function renderTrace(trace: PredictionPoint[], targets: string[]): string {
  if (trace.length < 2) {
    return "";
  }
  const charts = targets.map((target) => {
    const points = trace.map((p) => {
      const entry = p.prediction.find((q) => q.target === target);
      return { step: p.step, mean: entry?.mean ?? 0, sd: Math.sqrt(entry?.variance ?? 0) };
    });
    const w = 360;
    const h = 90;
    let lo = Infinity;
    let hi = -Infinity;
    for (const p of points) {
      lo = Math.min(lo, p.mean - 2 * p.sd);
      hi = Math.max(hi, p.mean + 2 * p.sd);
    }
    const span = hi - lo || 1;
    const xs = (i: number): number => PAD + (i / (points.length - 1)) * (w - 2 * PAD);
    const ys = (t: number): number => h - PAD - ((t - lo) / span) * (h - 2 * PAD);
    const upper = points.map((p, i) => `${px(xs(i))},${px(ys(p.mean + 2 * p.sd))}`);
    const lower = points.map((p, i) => `${px(xs(i))},${px(ys(p.mean - 2 * p.sd))}`);
    const meanLine = points.map((p, i) => `${px(xs(i))},${px(ys(p.mean))}`).join(" ");
    return (
      `<div class="trace" data-target="${escapeHtml(target)}" data-steps="${points.length}">` +
      `<h3>${escapeHtml(target)} over steps</h3>` +
      `<svg role="img" aria-label="prediction trace" viewBox="0 0 ${w} ${h}" ` +
      `width="${w}" height="${h}">` +
      `<polygon class="trace-band" points="${upper.join(" ")} ${lower.reverse().join(" ")}"></polygon>` +
      `<polyline class="trace-mean" points="${meanLine}"></polyline>` +
      `</svg>` +
      `</div>`
    );
  });
  return charts.join("");
}

function renderBanner(banner: Banner): string {
  const retry =
    banner.kind === "network"
      ? ' <button type="button" data-action="retry">retry</button>'
      : "";
  return (
    `<div class="banner banner--${banner.kind}" role="alert">` +
    `${escapeHtml(banner.message)}${retry}</div>`
  );
}

function inputHint(info: VariableInfo | undefined): string {
  if (!info) {
    return "";
  }
  return info.kind === "binary" ? "0 or 1" : `${fmt(info.lo)} to ${fmt(info.hi)}`;
}

/** Question cards: answered ones locked, the recommendation flagged, the rest
 * open for typing. Everything operable by keyboard (inputs and buttons). */
export function renderCards(state: ControllerState): string {
  const session = state.session;
  if (!session) {
    return "";
  }
  const byName = new Map(state.variables.map((v) => [v.name, v]));
  const recommended = state.next?.recommended ?? null;
  const busy = state.phase !== "ready";
  const answered = session.answered.map(
    (a) =>
      `<li class="card card--answered" data-variable="${escapeHtml(a.variable)}">` +
      `<span class="card-name">${escapeHtml(a.variable)}</span>` +
      `<span class="card-value">answered: ${fmt(a.value)}</span>` +
      `</li>`,
  );
  const open = session.available.map((name) => {
    const isBest = name === recommended;
    const safe = escapeHtml(name);
    return (
      `<li class="card${isBest ? " card--recommended" : ""}" data-variable="${safe}"` +
      `${isBest ? ' aria-current="step"' : ""}>` +
      `<span class="card-name">${safe}${isBest ? ' <em class="badge">recommended</em>' : ""}</span>` +
      `<label class="card-entry">answer (${inputHint(byName.get(name))})` +
      ` <input type="text" inputmode="decimal" data-variable="${safe}"` +
      `${busy ? " disabled" : ""}></label>` +
      ` <button type="button" data-action="answer" data-variable="${safe}"` +
      `${busy ? " disabled" : ""}>submit</button>` +
      `</li>`
    );
  });
  return `<ul class="cards" role="list">${answered.join("")}${open.join("")}</ul>`;
}

export function renderApp(state: ControllerState): string {
  if (state.phase === "idle") {
    return '<p class="empty">pick a model and start a session</p>';
  }
  if (state.phase === "loading") {
    return '<p class="empty">starting session&#8230;</p>';
  }
  const banner = state.banner ? renderBanner(state.banner) : "";
  if (state.phase === "error" || !state.session) {
    return banner || '<div class="banner banner--service" role="alert">session unavailable</div>';
  }
  const session = state.session;
  const header =
    `<header class="status" data-step="${session.step}" data-status="${session.status}">` +
    `<span>model ${escapeHtml(session.model_id)}</span>` +
    `<span>seed ${session.seed}</span>` +
    `<span>step ${session.step}</span>` +
    `<span>status ${session.status}</span>` +
    `</header>`;
  const done =
    session.status === "exhausted"
      ? '<p class="empty">every question is answered; the prediction below uses all of them</p>'
      : "";
  const chart = state.next
    ? `<section class="panel"><h2>information reward</h2>` +
      renderRewardChart(state.next.rewards, state.next.recommended) +
      `</section>`
    : "";
  const prediction =
    `<section class="panel"><h2>prediction</h2>` +
    renderPrediction(state.next ? state.next.prediction : session.prediction) +
    renderTrace(state.trace, session.targets) +
    `</section>`;
  const cards = `<section class="panel"><h2>questions</h2>${renderCards(state)}</section>`;
  return banner + header + done + cards + chart + prediction;
}
