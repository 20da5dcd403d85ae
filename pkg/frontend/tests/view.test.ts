/**
 * Render audit: the dashboard may only show values that arrived in
 * snapshots. buildViewModel is walked leaf by leaf and every number it
 * contains must be a field of some received snapshot, or one of the two
 * corridor band edges mean +- n_sigma * sigma computed from a single
 * snapshot's own fields. Anything else would mean the console invented
 * state client-side.
 */

import { describe, expect, it } from "vitest";

import { Snapshot } from "../src/protocol.js";
import { applySnapshot, createState } from "../src/state.js";
import { buildViewModel } from "../src/view.js";
import { makeSnapshot } from "./state.test.js";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomSnapshot(rng: () => number, tick: number): Snapshot {
  const corridor = rng() > 0.3;
  const modes = ["OFF", "FORWARD", "REVERSING", "HOLD_AT_START"] as const;
  const states = ["running", "paused", "completed"] as const;
  return {
    tick,
    time_s: tick * 0.01,
    phase: 0.01 + 0.99 * rng(),
    progress: rng(),
    modality: rng() > 0.5 ? "assisted" : "resistive",
    safety_mode: modes[Math.floor(rng() * modes.length)],
    run_state: states[Math.floor(rng() * states.length)],
    force_mag_n: 20 * rng(),
    tangential_force_n: 40 * rng() - 20,
    orthogonal_force_n: 10 * rng(),
    deviation_m: 0.05 * rng(),
    corridor_mean_n: corridor ? 2 + 3 * rng() : null,
    corridor_sigma_n: corridor ? 0.2 + rng() : null,
    n_sigma: corridor ? 5.0 : null,
    ref_pose: [rng(), rng(), rng(), 1, 0, 0, 0],
    tcp_pose: [rng(), rng(), rng(), 1, 0, 0, 0],
  };
}

function numericLeaves(node: unknown, out: number[] = []): number[] {
  if (typeof node === "number") {
    out.push(node);
  } else if (Array.isArray(node)) {
    for (const item of node) numericLeaves(item, out);
  } else if (node && typeof node === "object") {
    for (const value of Object.values(node)) numericLeaves(value, out);
  }
  return out;
}

function allowedValues(snaps: Snapshot[]): Set<number> {
  const allowed = new Set<number>();
  for (const s of snaps) {
    allowed.add(s.tick);
    allowed.add(s.time_s);
    allowed.add(s.phase);
    allowed.add(s.progress);
    allowed.add(s.force_mag_n);
    allowed.add(s.tangential_force_n);
    allowed.add(s.orthogonal_force_n);
    allowed.add(s.deviation_m);
    if (s.corridor_mean_n !== null && s.corridor_sigma_n !== null && s.n_sigma !== null) {
      allowed.add(s.corridor_mean_n);
      allowed.add(s.corridor_sigma_n);
      allowed.add(s.n_sigma);
      const half = s.n_sigma * s.corridor_sigma_n;
      allowed.add(s.corridor_mean_n - half);
      allowed.add(s.corridor_mean_n + half);
    }
  }
  return allowed;
}

describe("render audit", () => {
  it("every view-model number comes from a received snapshot", () => {
    for (let seed = 1; seed <= 10; seed++) {
      const rng = mulberry32(seed);
      const state = createState();
      const received: Snapshot[] = [];
      for (let i = 0; i < 60; i++) {
        const snap = randomSnapshot(rng, i * 5);
        received.push(snap);
        applySnapshot(state, snap);
      }
      const vm = buildViewModel(state);
      const allowed = allowedValues(received);
      const leaves = numericLeaves(vm);
      expect(leaves.length).toBeGreaterThan(100);
      for (const value of leaves) {
        expect(allowed.has(value), `untraceable rendered value ${value} (seed ${seed})`).toBe(true);
      }
    }
  });

  it("series length never exceeds the received history", () => {
    const state = createState();
    for (let i = 0; i < 200; i++) applySnapshot(state, makeSnapshot(i * 5));
    const vm = buildViewModel(state);
    expect(vm.series.force.length).toBe(state.history.length);
    expect(vm.series.band.length).toBeLessThanOrEqual(state.history.length);
  });
});

describe("derived plot annotations", () => {
  it("marks exactly the samples outside the corridor band", () => {
    const state = createState();
    applySnapshot(state, makeSnapshot(0, { force_mag_n: 3.0 }));
    applySnapshot(state, makeSnapshot(5, { force_mag_n: 9.9 }));
    applySnapshot(state, makeSnapshot(10, { force_mag_n: 2.8 }));
    // band is 3.0 +- 5 * 0.5 = [0.5, 5.5]
    const vm = buildViewModel(state);
    expect(vm.series.violations).toHaveLength(1);
    expect(vm.series.violations[0].v).toBe(9.9);
  });

  it("builds reversal spans from contiguous REVERSING snapshots", () => {
    const state = createState();
    applySnapshot(state, makeSnapshot(0));
    applySnapshot(state, makeSnapshot(5, { safety_mode: "REVERSING" }));
    applySnapshot(state, makeSnapshot(10, { safety_mode: "REVERSING" }));
    applySnapshot(state, makeSnapshot(15));
    applySnapshot(state, makeSnapshot(20, { safety_mode: "REVERSING" }));
    const vm = buildViewModel(state);
    expect(vm.series.reversingSpans).toEqual([
      [0.05, 0.15],
      [0.2, 0.2],
    ]);
  });

  it("renders no corridor artifacts when safety is off", () => {
    const state = createState();
    applySnapshot(
      state,
      makeSnapshot(0, { corridor_mean_n: null, corridor_sigma_n: null, n_sigma: null }),
    );
    const vm = buildViewModel(state);
    expect(vm.series.band).toHaveLength(0);
    expect(vm.series.violations).toHaveLength(0);
    expect(vm.scalars!.corridor_mean_n).toBeNull();
  });
});
