// Bridge connection: HELLO handshake as role=ui, auto-reconnect with
// backoff, sequence-numbered requests. The WebSocket implementation is
// injectable so the message stream is testable without sockets.

import { encode, decode, message, type Message } from "./protocol.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface BridgeClientOptions {
  factory?: WebSocketFactory;
  onMessage?: (msg: Message) => void;
  onStatus?: (status: "connecting" | "connected" | "disconnected") => void;
  reconnectDelayMs?: number;
  maxReconnectDelayMs?: number;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
}

export class BridgeClient {
  private ws: WebSocketLike | null = null;
  private seq = 0;
  private closed = false;
  private delay: number;
  readonly sent: Message[] = []; // outbound log (drives the protocol tests)

  constructor(private url: string, private opts: BridgeClientOptions = {}) {
    this.delay = opts.reconnectDelayMs ?? 500;
  }

  connect(): void {
    this.closed = false;
    this.opts.onStatus?.("connecting");
    const factory = this.opts.factory ?? ((u: string) => new WebSocket(u) as unknown as WebSocketLike);
    const ws = factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.delay = this.opts.reconnectDelayMs ?? 500;
      this.sendMessage(message("HELLO", {
        payload: { role: "ui", subscriptions: ["frames", "peers", "events"] },
      }));
    };
    ws.onmessage = (ev) => {
      let msg: Message;
      try {
        msg = decode(String(ev.data));
      } catch {
        return; // tolerate junk; the bridge never sends any
      }
      if (msg.type === "ACK" && msg.payload?.snapshot) this.opts.onStatus?.("connected");
      this.opts.onMessage?.(msg);
    };
    ws.onclose = () => this.handleDown();
    ws.onerror = () => { /* onclose follows */ };
  }

  private handleDown(): void {
    this.opts.onStatus?.("disconnected");
    this.ws = null;
    if (this.closed) return;
    const wait = this.delay;
    this.delay = Math.min(this.delay * 2, this.opts.maxReconnectDelayMs ?? 8000);
    const later = this.opts.setTimeoutFn ?? setTimeout;
    later(() => {
      if (!this.closed) this.connect();
    }, wait);
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }

  private sendMessage(msg: Message): number {
    this.seq += 1;
    msg.seq = this.seq;
    this.sent.push(msg);
    this.ws?.send(encode(msg));
    return this.seq;
  }

  sendCommand(vehicleId: string, throttle: number, steering: number): number {
    return this.sendMessage(message("CMD", { vehicle_id: vehicleId, payload: { throttle, steering } }));
  }

  setMode(vehicleId: string, mode: "manual" | "autonomous"): number {
    return this.sendMessage(message("MODE", { vehicle_id: vehicleId, payload: { mode } }));
  }

  reset(): number {
    return this.sendMessage(message("RESET"));
  }

  record(action: "start" | "stop" | "export", inline = true): number {
    const payload: Record<string, unknown> = { action };
    if (action === "export") payload.inline = inline;
    return this.sendMessage(message("RECORD", { payload }));
  }

  /** Direct element write over the bridge (the panel normally goes
   * through the city-manager HTTP API; ui-role writes are accepted
   * too, e.g. when no manager is running). */
  setElement(elementId: string, state: string): number {
    return this.sendMessage(message("SCM_EVENT", { payload: { element_id: elementId, state } }));
  }
}
