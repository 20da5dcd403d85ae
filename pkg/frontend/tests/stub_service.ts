/**
 * Stub session service for tests. Speaks the documented wire protocol:
 * server-first hello, newline-terminated envelopes, snapshots every
 * decimation ticks, commands applied before the next tick.
 *
 * The simulated "physics" is the minimum needed to exercise a console:
 * held forces echo into snapshots, estop freezes the tick and latches,
 * reset rebuilds, pause heartbeats the last row.
 */

import { AddressInfo } from "node:net";
import { WebSocket, WebSocketServer } from "ws";

interface ReceivedCommand {
  action: string;
  payload: Record<string, unknown>;
  atTick: number;
  wallMs: number;
}

export interface StubOptions {
  dt?: number;
  decimation?: number;
  periodMs?: number;
  scenario?: string;
  version?: number;
  corridor?: { mean: number; sigma: number; nSigma: number } | null;
}

export class StubService {
  readonly dt: number;
  readonly decimation: number;
  readonly periodMs: number;
  readonly scenario: string;
  readonly version: number;
  readonly received: ReceivedCommand[] = [];
  connections = 0;

  private wss: WebSocketServer | null = null;
  private clients = new Set<WebSocket>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private corridor: { mean: number; sigma: number; nSigma: number } | null;

  tick = 0;
  runState: "running" | "paused" | "halted" | "completed" = "running";
  modality = "passive";
  safetyMode = "FORWARD";
  private heldTangential = 0;
  private heldOrthogonal = 0;
  private waiters: Array<{ action: string; resolve: (cmd: ReceivedCommand) => void }> = [];

  constructor(opts: StubOptions = {}) {
    this.dt = opts.dt ?? 0.01;
    this.decimation = opts.decimation ?? 5;
    this.periodMs = opts.periodMs ?? this.dt * this.decimation * 1000;
    this.scenario = opts.scenario ?? "stub_session";
    this.version = opts.version ?? 1;
    this.corridor = opts.corridor === undefined
      ? { mean: 3.0, sigma: 0.5, nSigma: 5.0 }
      : opts.corridor;
  }

  async start(): Promise<string> {
    this.wss = new WebSocketServer({ port: 0 });
    this.wss.on("connection", (ws) => this.onConnection(ws));
    await new Promise<void>((resolve) => this.wss!.once("listening", resolve));
    this.timer = setInterval(() => this.step(), this.periodMs);
    const port = (this.wss.address() as AddressInfo).port;
    return `ws://127.0.0.1:${port}/ws`;
  }

  async stop(): Promise<void> {
    if (this.timer) clearInterval(this.timer);
    this.timer = null;
    for (const ws of this.clients) ws.close();
    this.clients.clear();
    await new Promise<void>((resolve) => (this.wss ? this.wss.close(() => resolve()) : resolve()));
  }

  /** Resolves when the next command with this action arrives. */
  waitForCommand(action: string): Promise<ReceivedCommand> {
    return new Promise((resolve) => this.waiters.push({ action, resolve }));
  }

  /** Server-initiated drop of every live connection (keeps listening). */
  dropClients(): void {
    for (const ws of this.clients) ws.close();
    this.clients.clear();
  }

  private envelope(type: string, payload: Record<string, unknown>): string {
    return JSON.stringify({ type, tick: this.tick, payload }) + "\n";
  }

  private onConnection(ws: WebSocket): void {
    this.connections++;
    let handshook = false;
    ws.send(
      this.envelope("hello", {
        protocol: "rehabkit-session",
        version: this.version,
        scenario: this.scenario,
        dt: this.dt,
        decimation: this.decimation,
        modality: this.modality,
      }),
    );
    ws.on("message", (data) => {
      for (const line of String(data).split("\n")) {
        if (!line.trim()) continue;
        let env: { type?: string; payload?: Record<string, unknown> };
        try {
          env = JSON.parse(line);
        } catch {
          ws.send(this.envelope("error", { message: "invalid JSON" }));
          continue;
        }
        if (!handshook) {
          const p = env.payload ?? {};
          if (env.type !== "hello" || p.protocol !== "rehabkit-session" || p.version !== 1) {
            ws.send(this.envelope("error", { message: "protocol mismatch: need rehabkit-session v1" }));
            ws.close(1002);
            return;
          }
          handshook = true;
          this.clients.add(ws);
          ws.send(this.envelope("snapshot", this.snapshot()));
          continue;
        }
        if (env.type !== "command") continue;
        this.onCommand(ws, env.payload ?? {});
      }
    });
    ws.on("close", () => this.clients.delete(ws));
  }

  private onCommand(ws: WebSocket, payload: Record<string, unknown>): void {
    const action = String(payload.action ?? "");
    const record: ReceivedCommand = { action, payload, atTick: this.tick, wallMs: Date.now() };
    this.received.push(record);
    this.waiters = this.waiters.filter((w) => {
      if (w.action !== action) return true;
      w.resolve(record);
      return false;
    });
    switch (action) {
      case "set_force":
        this.heldTangential = Number(payload.tangential_n ?? 0);
        this.heldOrthogonal = Number(payload.orthogonal_n ?? 0);
        break;
      case "set_modality":
        this.modality = String(payload.mode ?? "custom");
        break;
      case "pause":
        if (this.runState === "running") this.runState = "paused";
        break;
      case "resume":
        if (this.runState === "paused") this.runState = "running";
        break;
      case "estop":
        this.runState = "halted";
        this.heldTangential = 0;
        this.heldOrthogonal = 0;
        break;
      case "reset":
        this.tick = 0;
        this.runState = "running";
        this.heldTangential = 0;
        this.heldOrthogonal = 0;
        break;
      default:
        ws.send(this.envelope("error", { message: `unknown action '${action}'` }));
        break;
    }
  }

  private snapshot(): Record<string, unknown> {
    const t = this.tick * this.dt;
    const mag = Math.hypot(this.heldTangential, this.heldOrthogonal);
    return {
      tick: this.tick,
      time_s: t,
      phase: Math.max(0.01, Math.exp(-0.05 * t)),
      progress: Math.min(1, 0.02 * t),
      modality: this.modality,
      safety_mode: this.safetyMode,
      run_state: this.runState,
      force_mag_n: mag,
      tangential_force_n: this.heldTangential,
      orthogonal_force_n: Math.abs(this.heldOrthogonal),
      deviation_m: 0.002 * Math.abs(this.heldOrthogonal),
      corridor_mean_n: this.corridor ? this.corridor.mean : null,
      corridor_sigma_n: this.corridor ? this.corridor.sigma : null,
      n_sigma: this.corridor ? this.corridor.nSigma : null,
      ref_pose: [0.1, 0.2, 0.3, 1, 0, 0, 0],
      tcp_pose: [0.1, 0.2, 0.3, 1, 0, 0, 0],
    };
  }

  private step(): void {
    if (this.runState === "running") this.tick += this.decimation;
    const frame = this.envelope("snapshot", this.snapshot());
    for (const ws of this.clients) {
      if (ws.readyState === WebSocket.OPEN) ws.send(frame);
    }
  }
}
