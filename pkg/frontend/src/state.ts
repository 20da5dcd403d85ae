/**
 * Console state: connection, the latest snapshot, a bounded history window
 * for the plots, and the input widgets' values.
 *
 * The console holds no physics. Everything rendered is either a received
 * snapshot field or the corridor band edges mean +- n_sigma * sigma computed
 * from one snapshot's own fields; the view layer enforces that discipline
 * and the tests audit it.
 */

import { HelloPayload, Snapshot } from "./protocol.js";
import { SocketStatus } from "./socket.js";

export const HISTORY_WINDOW_S = 30;
// hard cap so a misbehaving service cannot grow the window unbounded
export const HISTORY_MAX_ROWS = 4096;

/**
 * estop confirmation ladder. "sent" on click, "confirmed" once a halted
 * snapshot arrives, back to "none" when a running snapshot shows the reset
 * took. Inputs stay locked while not "none".
 */
export type EstopPhase = "none" | "sent" | "confirmed";

export interface InputState {
  tangential_n: number;
  orthogonal_n: number;
  orthogonal_angle: number;
  modality: "passive" | "assisted" | "resistive";
}

export interface ConsoleState {
  status: SocketStatus;
  statusDetail: string;
  hello: HelloPayload | null;
  latest: Snapshot | null;
  history: Snapshot[];
  estop: EstopPhase;
  lastWarning: string;
  inputs: InputState;
}

export function createState(): ConsoleState {
  return {
    status: "idle",
    statusDetail: "",
    hello: null,
    latest: null,
    history: [],
    estop: "none",
    lastWarning: "",
    inputs: { tangential_n: 0, orthogonal_n: 0, orthogonal_angle: 0, modality: "passive" },
  };
}

export function applyStatus(state: ConsoleState, status: SocketStatus, detail?: string): void {
  state.status = status;
  state.statusDetail = detail ?? "";
}

export function applyHello(state: ConsoleState, hello: HelloPayload): void {
  state.hello = hello;
}

/** Seconds between published snapshots, once the hello is known. */
export function snapshotPeriodS(state: ConsoleState): number {
  return state.hello ? state.hello.dt * state.hello.decimation : 0.05;
}

export function applySnapshot(state: ConsoleState, snap: Snapshot): void {
  const prev = state.latest;
  if (prev && snap.time_s < prev.time_s) {
    // time went backwards: the session was reset, the old curve is stale
    state.history = [];
  }
  state.latest = snap;
  const last = state.history[state.history.length - 1];
  if (!last || snap.tick !== last.tick) {
    // heartbeats repeat the last tick while paused or halted; plotting
    // them would stretch the curves with duplicate points
    state.history.push(snap);
  }
  const cutoff = snap.time_s - HISTORY_WINDOW_S;
  while (
    state.history.length > HISTORY_MAX_ROWS ||
    (state.history.length && state.history[0].time_s < cutoff)
  ) {
    state.history.shift();
  }

  if (state.estop === "sent" && snap.run_state === "halted") {
    state.estop = "confirmed";
  } else if (state.estop === "confirmed" && snap.run_state === "running") {
    state.estop = "none";
  }
}

export function noteEstopSent(state: ConsoleState): void {
  state.estop = "sent";
}

export function noteWarning(state: ConsoleState, message: string): void {
  state.lastWarning = message;
}

/** Inputs are usable only while streaming and not waiting out an estop. */
export function inputsEnabled(state: ConsoleState): boolean {
  return state.status === "streaming" && state.estop === "none";
}
