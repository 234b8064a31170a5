// WebSocket client: dispatches server messages, and buffers at most one
// outbound control while disconnected (dropped with a stale flag after one
// tick period).

import { ControlTriple, ServerMsg } from "./protocol.js";

export interface PendingControl {
  control: ControlTriple;
  tick: number;
  queuedAtMs: number;
}

export class Connection {
  private ws: WebSocket | null = null;
  private pending: PendingControl | null = null;
  tickPeriodMs = 1000;
  onMessage: (msg: ServerMsg) => void = () => undefined;
  onStatus: (status: "connecting" | "open" | "closed") => void = () => undefined;
  onStaleDrop: () => void = () => undefined;
  now: () => number = () => Date.now();

  connect(url: string): void {
    this.onStatus("connecting");
    this.ws = new WebSocket(url);
    this.ws.onopen = () => {
      this.onStatus("open");
      this.flushPending();
    };
    this.ws.onclose = () => this.onStatus("closed");
    this.ws.onmessage = (ev) => {
      try {
        this.onMessage(JSON.parse(ev.data as string) as ServerMsg);
      } catch {
        this.onMessage({ type: "error", message: "unparseable server message" });
      }
    };
  }

  get isOpen(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }

  send(msg: object): void {
    if (this.isOpen) this.ws!.send(JSON.stringify(msg));
  }

  sendControl(control: ControlTriple, tick: number): void {
    if (this.isOpen) {
      this.send({ type: "control", tick, ...control });
      return;
    }
    this.pending = { control, tick, queuedAtMs: this.now() };
  }

  // Called on reconnect and once per render frame while disconnected.
  flushPending(): void {
    if (!this.pending) return;
    const age = this.now() - this.pending.queuedAtMs;
    if (age > this.tickPeriodMs) {
      this.pending = null;
      this.onStaleDrop();
      return;
    }
    if (this.isOpen) {
      this.send({ type: "control", tick: this.pending.tick, ...this.pending.control });
      this.pending = null;
    }
  }
}
