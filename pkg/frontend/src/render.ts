/**
 * DOM painter for the view model. Builds a fixed skeleton once, then
 * updates text, bar widths, and SVG geometry in place on every snapshot.
 *
 * Plots are inline SVG (renderable under jsdom in tests, no canvas
 * dependency). Each strip autoscales to the data in the history window and
 * labels its extremes with the actual extreme samples.
 */

import { BandPoint, SeriesPoint, ViewModel } from "./view.js";

const PLOT_W = 600;
const PLOT_H = 90;
const PAD = 4;

const SVG_NS = "http://www.w3.org/2000/svg";

interface Strip {
  svg: SVGSVGElement;
  shade: SVGGElement;
  band: SVGPolygonElement;
  line: SVGPolylineElement;
  markers: SVGGElement;
  hiLabel: SVGTextElement;
  loLabel: SVGTextElement;
}

export interface Dashboard {
  root: HTMLElement;
  paint(vm: ViewModel): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls: string,
  parent: Node,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  parent.appendChild(node);
  return node;
}

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  parent: Node,
  cls = "",
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  if (cls) node.setAttribute("class", cls);
  parent.appendChild(node);
  return node;
}

function scalarSpan(parent: HTMLElement, label: string, field: string): HTMLSpanElement {
  const cell = el("div", "scalar", parent);
  el("span", "scalar-label", cell).textContent = label;
  const value = el("span", "scalar-value", cell);
  value.dataset.field = field;
  value.textContent = "-";
  return value;
}

function makeStrip(parent: HTMLElement, title: string, name: string): Strip {
  const box = el("div", "plot", parent);
  el("div", "plot-title", box).textContent = title;
  const svg = svgEl("svg", box);
  svg.setAttribute("viewBox", `0 0 ${PLOT_W} ${PLOT_H}`);
  svg.setAttribute("preserveAspectRatio", "none");
  svg.dataset.plot = name;
  const shade = svgEl("g", svg, "reversing-shade");
  const band = svgEl("polygon", svg, "corridor-band");
  band.setAttribute("points", "");
  const line = svgEl("polyline", svg, "series-line");
  line.setAttribute("points", "");
  line.setAttribute("fill", "none");
  const markers = svgEl("g", svg, "violation-markers");
  const hiLabel = svgEl("text", svg, "axis-label");
  hiLabel.setAttribute("x", "2");
  hiLabel.setAttribute("y", "12");
  const loLabel = svgEl("text", svg, "axis-label");
  loLabel.setAttribute("x", "2");
  loLabel.setAttribute("y", String(PLOT_H - 3));
  return { svg, shade, band, line, markers, hiLabel, loLabel };
}

interface Range {
  t0: number;
  t1: number;
  lo: number;
  hi: number;
}

function seriesRange(points: SeriesPoint[], extra: number[] = []): Range {
  let lo = Infinity;
  let hi = -Infinity;
  for (const p of points) {
    if (p.v < lo) lo = p.v;
    if (p.v > hi) hi = p.v;
  }
  for (const v of extra) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!points.length) return { t0: 0, t1: 1, lo: 0, hi: 1 };
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return { t0: points[0].t, t1: Math.max(points[points.length - 1].t, points[0].t + 1e-9), lo, hi };
}

function x(r: Range, t: number): number {
  return PAD + ((t - r.t0) / (r.t1 - r.t0)) * (PLOT_W - 2 * PAD);
}

function y(r: Range, v: number): number {
  return PLOT_H - PAD - ((v - r.lo) / (r.hi - r.lo)) * (PLOT_H - 2 * PAD);
}

function polyPoints(r: Range, points: SeriesPoint[]): string {
  return points.map((p) => `${x(r, p.t).toFixed(1)},${y(r, p.v).toFixed(1)}`).join(" ");
}

function bandPoints(r: Range, band: BandPoint[]): string {
  if (!band.length) return "";
  const top = band.map((b) => `${x(r, b.t).toFixed(1)},${y(r, b.hi).toFixed(1)}`);
  const bottom = band
    .slice()
    .reverse()
    .map((b) => `${x(r, b.t).toFixed(1)},${y(r, b.lo).toFixed(1)}`);
  return [...top, ...bottom].join(" ");
}

function fmt(v: number | null, digits = 2): string {
  return v === null ? "n/a" : v.toFixed(digits);
}

function paintStrip(
  strip: Strip,
  points: SeriesPoint[],
  opts: {
    band?: BandPoint[];
    violations?: SeriesPoint[];
    reversingSpans?: Array<[number, number]>;
    digits?: number;
  } = {},
): void {
  const bandExtremes = (opts.band ?? []).flatMap((b) => [b.lo, b.hi]);
  const r = seriesRange(points, bandExtremes);
  strip.line.setAttribute("points", polyPoints(r, points));
  strip.band.setAttribute("points", bandPoints(r, opts.band ?? []));

  strip.markers.textContent = "";
  for (const p of opts.violations ?? []) {
    const dot = svgEl("circle", strip.markers, "violation");
    dot.setAttribute("cx", x(r, p.t).toFixed(1));
    dot.setAttribute("cy", y(r, p.v).toFixed(1));
    dot.setAttribute("r", "3");
  }

  strip.shade.textContent = "";
  for (const [a, b] of opts.reversingSpans ?? []) {
    const rect = svgEl("rect", strip.shade, "reversing");
    rect.setAttribute("x", x(r, a).toFixed(1));
    rect.setAttribute("width", Math.max(1, x(r, b) - x(r, a)).toFixed(1));
    rect.setAttribute("y", "0");
    rect.setAttribute("height", String(PLOT_H));
  }

  const digits = opts.digits ?? 2;
  strip.hiLabel.textContent = points.length ? fmt(r.hi, digits) : "";
  strip.loLabel.textContent = points.length ? fmt(r.lo, digits) : "";
}

export function buildDashboard(root: HTMLElement): Dashboard {
  root.textContent = "";
  const banner = el("div", "banner", root);
  const warning = el("div", "warning", root);

  const badges = el("div", "badges", root);
  const scenario = el("span", "badge badge-scenario", badges);
  const modality = el("span", "badge badge-modality", badges);
  const safety = el("span", "badge badge-safety", badges);
  const runState = el("span", "badge badge-run", badges);

  const progressRow = el("div", "progress-row", root);
  el("span", "scalar-label", progressRow).textContent = "progress";
  const progressOuter = el("div", "progress-outer", progressRow);
  const progressFill = el("div", "progress-fill", progressOuter);
  const progressText = el("span", "scalar-value", progressRow);
  progressText.dataset.field = "progress";

  const scalars = el("div", "scalars", root);
  const spans = {
    tick: scalarSpan(scalars, "tick", "tick"),
    time_s: scalarSpan(scalars, "time [s]", "time_s"),
    phase: scalarSpan(scalars, "phase", "phase"),
    force_mag_n: scalarSpan(scalars, "|f| [N]", "force_mag_n"),
    tangential_force_n: scalarSpan(scalars, "f_t [N]", "tangential_force_n"),
    orthogonal_force_n: scalarSpan(scalars, "|f_o| [N]", "orthogonal_force_n"),
    deviation_m: scalarSpan(scalars, "deviation [m]", "deviation_m"),
    corridor_mean_n: scalarSpan(scalars, "corridor mu [N]", "corridor_mean_n"),
    corridor_sigma_n: scalarSpan(scalars, "corridor sigma [N]", "corridor_sigma_n"),
    n_sigma: scalarSpan(scalars, "band [sigma]", "n_sigma"),
  };

  const plots = el("div", "plots", root);
  const tangentialStrip = makeStrip(plots, "tangential force f_t [N]", "tangential");
  const orthogonalStrip = makeStrip(plots, "off-path force |f_o| [N]", "orthogonal");
  const deviationStrip = makeStrip(plots, "tunnel deviation [m]", "deviation");
  const corridorStrip = makeStrip(plots, "force vs corridor [N]", "corridor");

  function paint(vm: ViewModel): void {
    banner.textContent = vm.connectionDetail
      ? `${vm.connection}: ${vm.connectionDetail}`
      : vm.connection;
    banner.className = `banner banner-${vm.connection}`;
    warning.textContent = vm.warning;
    warning.style.display = vm.warning ? "" : "none";
    root.classList.toggle("inputs-locked", !vm.inputsEnabled);

    scenario.textContent = vm.scenario;
    if (vm.badges) {
      modality.textContent = vm.badges.modality;
      safety.textContent = vm.badges.safety_mode;
      safety.className = `badge badge-safety safety-${vm.badges.safety_mode}`;
      runState.textContent = vm.badges.run_state;
      runState.className = `badge badge-run run-${vm.badges.run_state}`;
    } else {
      modality.textContent = "";
      safety.textContent = "waiting for snapshots";
      runState.textContent = "";
    }

    if (vm.scalars) {
      const s = vm.scalars;
      progressFill.style.width = `${(s.progress * 100).toFixed(1)}%`;
      progressText.textContent = `${(s.progress * 100).toFixed(1)}%`;
      spans.tick.textContent = String(s.tick);
      spans.time_s.textContent = fmt(s.time_s);
      spans.phase.textContent = fmt(s.phase, 3);
      spans.force_mag_n.textContent = fmt(s.force_mag_n);
      spans.tangential_force_n.textContent = fmt(s.tangential_force_n);
      spans.orthogonal_force_n.textContent = fmt(s.orthogonal_force_n);
      spans.deviation_m.textContent = fmt(s.deviation_m, 4);
      spans.corridor_mean_n.textContent = fmt(s.corridor_mean_n);
      spans.corridor_sigma_n.textContent = fmt(s.corridor_sigma_n);
      spans.n_sigma.textContent = fmt(s.n_sigma, 1);
    }

    paintStrip(tangentialStrip, vm.series.tangential);
    paintStrip(orthogonalStrip, vm.series.orthogonal);
    paintStrip(deviationStrip, vm.series.deviation, { digits: 4 });
    paintStrip(corridorStrip, vm.series.force, {
      band: vm.series.band,
      violations: vm.series.violations,
      reversingSpans: vm.series.reversingSpans,
    });
  }

  return { root, paint };
}
