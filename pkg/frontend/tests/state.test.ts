import { describe, expect, it } from "vitest";

import { Snapshot } from "../src/protocol.js";
import {
  applySnapshot,
  applyStatus,
  createState,
  HISTORY_MAX_ROWS,
  HISTORY_WINDOW_S,
  inputsEnabled,
  noteEstopSent,
} from "../src/state.js";

export function makeSnapshot(tick: number, over: Partial<Snapshot> = {}): Snapshot {
  return {
    tick,
    time_s: tick * 0.01,
    phase: 0.8,
    progress: 0.4,
    modality: "assisted",
    safety_mode: "FORWARD",
    run_state: "running",
    force_mag_n: 3.1,
    tangential_force_n: 3.0,
    orthogonal_force_n: 0.8,
    deviation_m: 0.004,
    corridor_mean_n: 3.0,
    corridor_sigma_n: 0.5,
    n_sigma: 5.0,
    ref_pose: [0, 0, 0, 1, 0, 0, 0],
    tcp_pose: [0, 0, 0, 1, 0, 0, 0],
    ...over,
  };
}

describe("history window", () => {
  it("keeps at most the last 30 s of snapshots", () => {
    const state = createState();
    // snapshots every 5 ticks at dt 0.01 for 40 simulated seconds
    for (let tick = 0; tick <= 4000; tick += 5) {
      applySnapshot(state, makeSnapshot(tick));
    }
    const span =
      state.history[state.history.length - 1].time_s - state.history[0].time_s;
    expect(span).toBeLessThanOrEqual(HISTORY_WINDOW_S);
    expect(state.history.length).toBeLessThanOrEqual(HISTORY_MAX_ROWS);
    expect(state.latest!.tick).toBe(4000);
  });

  it("does not stack repeated heartbeat ticks", () => {
    const state = createState();
    applySnapshot(state, makeSnapshot(100));
    for (let i = 0; i < 10; i++) {
      applySnapshot(state, makeSnapshot(100, { run_state: "paused" }));
    }
    expect(state.history).toHaveLength(1);
    expect(state.latest!.run_state).toBe("paused");
  });

  it("drops the stale curve when the session resets", () => {
    const state = createState();
    for (let tick = 0; tick <= 500; tick += 5) applySnapshot(state, makeSnapshot(tick));
    expect(state.history.length).toBeGreaterThan(50);
    applySnapshot(state, makeSnapshot(0));
    expect(state.history).toHaveLength(1);
    expect(state.history[0].tick).toBe(0);
  });
});

describe("estop ladder", () => {
  it("locks on click, confirms on halted, releases on running", () => {
    const state = createState();
    applyStatus(state, "streaming");
    applySnapshot(state, makeSnapshot(10));
    expect(inputsEnabled(state)).toBe(true);

    noteEstopSent(state);
    expect(inputsEnabled(state)).toBe(false);

    // a stale running heartbeat must not unlock a sent estop
    applySnapshot(state, makeSnapshot(15));
    expect(state.estop).toBe("sent");
    expect(inputsEnabled(state)).toBe(false);

    applySnapshot(state, makeSnapshot(15, { run_state: "halted" }));
    expect(state.estop).toBe("confirmed");
    expect(inputsEnabled(state)).toBe(false);

    // reset took: running snapshot clears the lock
    applySnapshot(state, makeSnapshot(0));
    expect(state.estop).toBe("none");
    expect(inputsEnabled(state)).toBe(true);
  });

  it("inputs stay disabled while the link is down", () => {
    const state = createState();
    applySnapshot(state, makeSnapshot(10));
    for (const status of ["idle", "connecting", "reconnecting", "failed", "closed"] as const) {
      applyStatus(state, status);
      expect(inputsEnabled(state)).toBe(false);
    }
    applyStatus(state, "streaming");
    expect(inputsEnabled(state)).toBe(true);
  });
});
