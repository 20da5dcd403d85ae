/**
 * View model: the exact set of session values the dashboard shows.
 *
 * Every number in here is a field of a received snapshot, except the
 * corridor band edges, which are mean +- n_sigma * sigma of one snapshot's
 * own fields. Nothing is extrapolated or simulated client-side; the render
 * audit test walks this structure and checks that discipline.
 */

import { Snapshot } from "./protocol.js";
import { ConsoleState } from "./state.js";

export interface SeriesPoint {
  t: number;
  v: number;
}

export interface BandPoint {
  t: number;
  lo: number;
  hi: number;
}

export interface ViewModel {
  connection: string;
  connectionDetail: string;
  scenario: string;
  warning: string;
  inputsEnabled: boolean;
  /** Scalar readouts from the latest snapshot, null before the first one. */
  scalars: {
    tick: number;
    time_s: number;
    phase: number;
    progress: number;
    force_mag_n: number;
    tangential_force_n: number;
    orthogonal_force_n: number;
    deviation_m: number;
    corridor_mean_n: number | null;
    corridor_sigma_n: number | null;
    n_sigma: number | null;
  } | null;
  badges: {
    modality: string;
    safety_mode: string;
    run_state: string;
  } | null;
  series: {
    tangential: SeriesPoint[];
    orthogonal: SeriesPoint[];
    deviation: SeriesPoint[];
    force: SeriesPoint[];
    band: BandPoint[];
    /** Band breaches among the force points, for violation markers. */
    violations: SeriesPoint[];
    /** [start, end] time spans where the supervisor was reversing. */
    reversingSpans: Array<[number, number]>;
  };
}

export function corridorBand(snap: Snapshot): BandPoint | null {
  if (snap.corridor_mean_n === null || snap.corridor_sigma_n === null || snap.n_sigma === null) {
    return null;
  }
  const half = snap.n_sigma * snap.corridor_sigma_n;
  return { t: snap.time_s, lo: snap.corridor_mean_n - half, hi: snap.corridor_mean_n + half };
}

export function buildViewModel(state: ConsoleState): ViewModel {
  const snap = state.latest;
  const series: ViewModel["series"] = {
    tangential: [],
    orthogonal: [],
    deviation: [],
    force: [],
    band: [],
    violations: [],
    reversingSpans: [],
  };

  let revStart: number | null = null;
  for (const s of state.history) {
    series.tangential.push({ t: s.time_s, v: s.tangential_force_n });
    series.orthogonal.push({ t: s.time_s, v: s.orthogonal_force_n });
    series.deviation.push({ t: s.time_s, v: s.deviation_m });
    series.force.push({ t: s.time_s, v: s.force_mag_n });
    const band = corridorBand(s);
    if (band) {
      series.band.push(band);
      if (s.force_mag_n < band.lo || s.force_mag_n > band.hi) {
        series.violations.push({ t: s.time_s, v: s.force_mag_n });
      }
    }
    if (s.safety_mode === "REVERSING") {
      if (revStart === null) revStart = s.time_s;
    } else if (revStart !== null) {
      series.reversingSpans.push([revStart, s.time_s]);
      revStart = null;
    }
  }
  if (revStart !== null && state.history.length) {
    series.reversingSpans.push([revStart, state.history[state.history.length - 1].time_s]);
  }

  return {
    connection: state.status,
    connectionDetail: state.statusDetail,
    scenario: state.hello?.scenario ?? "",
    warning: state.lastWarning,
    inputsEnabled: state.status === "streaming" && state.estop === "none",
    scalars: snap
      ? {
          tick: snap.tick,
          time_s: snap.time_s,
          phase: snap.phase,
          progress: snap.progress,
          force_mag_n: snap.force_mag_n,
          tangential_force_n: snap.tangential_force_n,
          orthogonal_force_n: snap.orthogonal_force_n,
          deviation_m: snap.deviation_m,
          corridor_mean_n: snap.corridor_mean_n,
          corridor_sigma_n: snap.corridor_sigma_n,
          n_sigma: snap.n_sigma,
        }
      : null,
    badges: snap
      ? { modality: snap.modality, safety_mode: snap.safety_mode, run_state: snap.run_state }
      : null,
    series,
  };
}
