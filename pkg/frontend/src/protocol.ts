/**
 * Wire protocol types and codecs for the rehabkit session service.
 *
 * Mirrors docs/protocol.md field by field. Envelopes are newline-terminated
 * JSON objects {type, tick, payload}; a single socket frame may carry
 * several envelopes. NaN never appears on the wire (the service serializes
 * it as null), so plain JSON.parse is safe.
 */

export const PROTOCOL = "rehabkit-session";
export const PROTOCOL_VERSION = 1;

/** [px, py, pz, qw, qx, qy, qz], quaternion scalar first. */
export type Pose = number[];

export interface HelloPayload {
  protocol: string;
  version: number;
  scenario: string;
  dt: number;
  decimation: number;
  modality: string;
}

export type RunState =
  | "running"
  | "paused"
  | "halted"
  | "completed"
  | "duration_limit"
  | "hold_timeout";

export type SafetyMode = "OFF" | "FORWARD" | "REVERSING" | "HOLD_AT_START";

export interface Snapshot {
  tick: number;
  time_s: number;
  phase: number;
  progress: number;
  modality: string;
  safety_mode: SafetyMode;
  run_state: RunState;
  force_mag_n: number;
  tangential_force_n: number;
  orthogonal_force_n: number;
  deviation_m: number;
  corridor_mean_n: number | null;
  corridor_sigma_n: number | null;
  n_sigma: number | null;
  ref_pose: Pose;
  tcp_pose: Pose;
}

export interface ErrorPayload {
  message: string;
}

export interface SetForceCommand {
  action: "set_force";
  tangential_n?: number;
  orthogonal_n?: number;
  orthogonal_angle?: number;
}

export interface SetModalityCommand {
  action: "set_modality";
  mode?: "passive" | "assisted" | "resistive" | "custom";
  force_gain?: number;
  baseline_rate?: number;
}

export interface BareCommand {
  action: "pause" | "resume" | "estop" | "reset";
}

export type SessionCommand = SetForceCommand | SetModalityCommand | BareCommand;

export interface Envelope {
  type: string;
  tick: number;
  payload: Record<string, unknown>;
}

/**
 * Split a socket frame into envelopes. Unparseable lines are reported to
 * `onBad` (or dropped) rather than aborting the rest of the frame.
 */
export function parseEnvelopes(
  frame: string,
  onBad?: (line: string, err: unknown) => void,
): Envelope[] {
  const out: Envelope[] = [];
  for (const line of frame.split("\n")) {
    if (!line.trim()) continue;
    try {
      const obj = JSON.parse(line);
      if (obj && typeof obj === "object" && typeof obj.type === "string") {
        out.push({
          type: obj.type,
          tick: typeof obj.tick === "number" ? obj.tick : 0,
          payload: obj.payload && typeof obj.payload === "object" ? obj.payload : {},
        });
      } else {
        onBad?.(line, new Error("not an envelope"));
      }
    } catch (err) {
      onBad?.(line, err);
    }
  }
  return out;
}

/** Null means the hello is acceptable; otherwise a human-readable reason. */
export function helloProblem(payload: Record<string, unknown>): string | null {
  if (payload.protocol !== PROTOCOL) {
    return `protocol mismatch: service speaks "${payload.protocol}", this console needs "${PROTOCOL}"`;
  }
  if (payload.version !== PROTOCOL_VERSION) {
    return `version mismatch: service is v${payload.version}, this console needs v${PROTOCOL_VERSION}`;
  }
  return null;
}

export function encodeHello(): string {
  return encodeEnvelope("hello", { protocol: PROTOCOL, version: PROTOCOL_VERSION });
}

export function encodeCommand(cmd: SessionCommand): string {
  return encodeEnvelope("command", cmd as unknown as Record<string, unknown>);
}

function encodeEnvelope(type: string, payload: Record<string, unknown>): string {
  return JSON.stringify({ type, tick: 0, payload }) + "\n";
}

export function isSnapshotEnvelope(env: Envelope): boolean {
  return env.type === "snapshot";
}

export function snapshotFromPayload(payload: Record<string, unknown>): Snapshot {
  // The service is the authority on field values; the console only needs
  // the shape. Missing numerics would denote a protocol break upstream.
  return payload as unknown as Snapshot;
}
