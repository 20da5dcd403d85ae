/**
 * Input layer: turns widget activity into session commands.
 *
 * Slider drags fire many times a second, so force changes are coalesced and
 * emitted as one set_force at most DEBOUNCE_MS after the last change. estop
 * must never wait: it cancels anything pending and goes out immediately.
 *
 * The service zeroes a held force 0.2 s after the last received command, so
 * while the sliders hold a nonzero force the emitter re-sends it every
 * KEEPALIVE_MS as a refresh.
 */

import { SessionCommand, SetForceCommand } from "./protocol.js";

export const DEBOUNCE_MS = 50;
export const KEEPALIVE_MS = 150;
export const SPASM_SPIKE_N = 40;
export const SPASM_DURATION_MS = 200;

export interface ForceSetting {
  tangential_n: number;
  orthogonal_n: number;
  orthogonal_angle: number;
}

export interface InputEmitterOptions {
  /** Returns true when the command went out, false when it was dropped. */
  send: (cmd: SessionCommand) => boolean;
  /** Current slider values; read at flush time so coalescing stays fresh. */
  getForce: () => ForceSetting;
  onDrop?: (what: string) => void;
  onEstop?: () => void;
}

export class InputEmitter {
  private opts: InputEmitterOptions;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private keepaliveTimer: ReturnType<typeof setInterval> | null = null;
  private spasmTimer: ReturnType<typeof setTimeout> | null = null;
  private spasmActive = false;

  constructor(opts: InputEmitterOptions) {
    this.opts = opts;
  }

  /** A slider moved; coalesce and emit the latest values shortly. */
  forceChanged(): void {
    if (this.debounceTimer !== null) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      this.flushForce();
    }, DEBOUNCE_MS);
  }

  /** Emergency stop: cancels pending slider traffic, emits right now. */
  estop(): void {
    this.cancelPending();
    this.stopKeepalive();
    this.emit({ action: "estop" }, "estop");
    this.opts.onEstop?.();
  }

  /**
   * Simulated spasm: a 40 N resisting transient for 0.2 s, then back to
   * whatever the sliders hold. Mirrors the scripted spasm scenarios.
   */
  spasm(): void {
    if (this.spasmActive) return;
    this.spasmActive = true;
    this.cancelPending();
    this.emit({ action: "set_force", tangential_n: -SPASM_SPIKE_N }, "spasm");
    this.spasmTimer = setTimeout(() => {
      this.spasmTimer = null;
      this.spasmActive = false;
      this.flushForce();
    }, SPASM_DURATION_MS);
  }

  setModality(mode: "passive" | "assisted" | "resistive"): void {
    this.emit({ action: "set_modality", mode }, "set_modality");
  }

  pause(): void {
    this.emit({ action: "pause" }, "pause");
  }

  resume(): void {
    this.emit({ action: "resume" }, "resume");
  }

  reset(): void {
    this.cancelPending();
    this.emit({ action: "reset" }, "reset");
  }

  /** Drop timers, e.g. on disconnect or page teardown. */
  dispose(): void {
    this.cancelPending();
    this.stopKeepalive();
    if (this.spasmTimer !== null) {
      clearTimeout(this.spasmTimer);
      this.spasmTimer = null;
      this.spasmActive = false;
    }
  }

  private flushForce(): void {
    const f = this.opts.getForce();
    const cmd: SetForceCommand = {
      action: "set_force",
      tangential_n: f.tangential_n,
      orthogonal_n: f.orthogonal_n,
      orthogonal_angle: f.orthogonal_angle,
    };
    if (!this.emit(cmd, "set_force")) return;
    if (f.tangential_n !== 0 || f.orthogonal_n !== 0) this.startKeepalive();
    else this.stopKeepalive();
  }

  private startKeepalive(): void {
    if (this.keepaliveTimer !== null) return;
    this.keepaliveTimer = setInterval(() => {
      if (this.spasmActive) return;
      const f = this.opts.getForce();
      if (f.tangential_n === 0 && f.orthogonal_n === 0) {
        this.stopKeepalive();
        return;
      }
      this.emit(
        {
          action: "set_force",
          tangential_n: f.tangential_n,
          orthogonal_n: f.orthogonal_n,
          orthogonal_angle: f.orthogonal_angle,
        },
        "force keepalive",
      );
    }, KEEPALIVE_MS);
  }

  private stopKeepalive(): void {
    if (this.keepaliveTimer !== null) {
      clearInterval(this.keepaliveTimer);
      this.keepaliveTimer = null;
    }
  }

  private cancelPending(): void {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
      this.debounceTimer = null;
    }
  }

  private emit(cmd: SessionCommand, what: string): boolean {
    const sent = this.opts.send(cmd);
    if (!sent) {
      this.stopKeepalive();
      this.opts.onDrop?.(what);
    }
    return sent;
  }
}
