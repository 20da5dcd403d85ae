/**
 * Reconnecting socket client for the session service.
 *
 * Handshake per docs/protocol.md: the server speaks first with a hello
 * envelope; the client answers with its own hello; snapshots stream after
 * that. A protocol or version mismatch is fatal (no retry, the user has to
 * pick a compatible service). A dropped link retries with exponential
 * backoff, 1 s doubling to a 10 s cap.
 *
 * The WebSocket constructor is injectable so tests can run under node with
 * the `ws` package; the browser default is the global implementation.
 */

import {
  Envelope,
  HelloPayload,
  SessionCommand,
  Snapshot,
  encodeCommand,
  encodeHello,
  helloProblem,
  parseEnvelopes,
  snapshotFromPayload,
} from "./protocol.js";

export type SocketStatus =
  | "idle"
  | "connecting"
  | "streaming"
  | "reconnecting"
  | "failed"
  | "closed";

/** The subset of the browser WebSocket API the client relies on. */
export interface WireSocket {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(code?: number): void;
  readyState: number;
}

export interface SessionSocketOptions {
  url: string;
  onSnapshot: (snap: Snapshot, tick: number) => void;
  onHello?: (hello: HelloPayload) => void;
  onServerError?: (message: string) => void;
  onStatus?: (status: SocketStatus, detail?: string) => void;
  wsFactory?: (url: string) => WireSocket;
}

const BACKOFF_BASE_MS = 1000;
const BACKOFF_MAX_MS = 10000;
const WS_OPEN = 1;

export class SessionSocket {
  readonly url: string;
  private opts: SessionSocketOptions;
  private ws: WireSocket | null = null;
  private status: SocketStatus = "idle";
  private handshook = false;
  private attempts = 0;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  hello: HelloPayload | null = null;

  constructor(opts: SessionSocketOptions) {
    this.url = opts.url;
    this.opts = opts;
  }

  connect(): void {
    this.stopped = false;
    this.open("connecting");
  }

  /** Stop streaming and cancel any pending retry. */
  disconnect(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    if (this.ws) {
      const ws = this.ws;
      this.ws = null;
      ws.onclose = null;
      ws.close();
    }
    this.setStatus("closed");
  }

  get connected(): boolean {
    return this.handshook && !!this.ws && this.ws.readyState === WS_OPEN;
  }

  /** Send a command. Returns false (and drops it) when not streaming. */
  send(cmd: SessionCommand): boolean {
    if (!this.connected || !this.ws) return false;
    this.ws.send(encodeCommand(cmd));
    return true;
  }

  private open(status: SocketStatus): void {
    this.setStatus(status);
    this.handshook = false;
    const factory =
      this.opts.wsFactory ?? ((url: string) => new WebSocket(url) as unknown as WireSocket);
    let ws: WireSocket;
    try {
      ws = factory(this.url);
    } catch (err) {
      this.setStatus("failed", `cannot open socket: ${String(err)}`);
      return;
    }
    this.ws = ws;

    ws.onopen = () => {
      // the server speaks first; nothing to do until its hello arrives
    };
    ws.onmessage = (ev) => this.onFrame(String(ev.data));
    ws.onerror = () => {
      // the close handler owns retry scheduling
    };
    ws.onclose = () => {
      if (this.ws !== ws) return;
      this.ws = null;
      this.handshook = false;
      if (!this.stopped && this.status !== "failed") this.scheduleRetry();
    };
  }

  private onFrame(frame: string): void {
    const envelopes = parseEnvelopes(frame, (line) => {
      console.warn("rehabkit console: dropping unparseable line", line);
    });
    for (const env of envelopes) this.onEnvelope(env);
  }

  private onEnvelope(env: Envelope): void {
    if (!this.handshook) {
      if (env.type === "hello") {
        const problem = helloProblem(env.payload);
        if (problem) {
          // fatal: surface it and stay down, a retry cannot fix a version gap
          this.setStatus("failed", problem);
          this.ws?.close();
          this.ws = null;
          return;
        }
        this.hello = env.payload as unknown as HelloPayload;
        this.ws?.send(encodeHello());
        this.handshook = true;
        this.attempts = 0;
        this.opts.onHello?.(this.hello);
        this.setStatus("streaming");
      } else if (env.type === "error") {
        this.setStatus("failed", String(env.payload.message ?? "handshake rejected"));
      }
      return;
    }
    switch (env.type) {
      case "snapshot":
        this.opts.onSnapshot(snapshotFromPayload(env.payload), env.tick);
        break;
      case "error":
        this.opts.onServerError?.(String(env.payload.message ?? "unknown error"));
        break;
      default:
        // forward-compatible: unknown envelope types are ignored
        break;
    }
  }

  private scheduleRetry(): void {
    const delay = Math.min(BACKOFF_BASE_MS * 2 ** this.attempts, BACKOFF_MAX_MS);
    this.attempts++;
    this.setStatus("reconnecting", `retrying in ${(delay / 1000).toFixed(0)} s`);
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.stopped) this.open("reconnecting");
    }, delay);
  }

  private setStatus(status: SocketStatus, detail?: string): void {
    this.status = status;
    this.opts.onStatus?.(status, detail);
  }
}
