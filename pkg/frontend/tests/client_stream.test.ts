// Protocol-level test of the UI's outbound message stream: handshake
// first, commands at the teleop cadence, dead-man behavior, reconnect
// with backoff - all against a scripted in-memory socket.

import { describe, expect, it } from "vitest";

import { BridgeClient, type WebSocketLike } from "../src/client.js";
import { decode, encode, message } from "../src/protocol.js";
import { TeleopLoop } from "../src/teleop.js";

class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // test helpers
  open(): void {
    this.onopen?.();
  }

  receive(msg: object): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const timeouts: Array<{ fn: () => void; ms: number }> = [];
  const statuses: string[] = [];
  const received: string[] = [];
  const client = new BridgeClient("ws://test", {
    factory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    onStatus: (s) => statuses.push(s),
    onMessage: (m) => received.push(m.type),
    reconnectDelayMs: 100,
    setTimeoutFn: (fn, ms) => {
      timeouts.push({ fn, ms });
      return 0;
    },
  });
  return { client, sockets, timeouts, statuses, received };
}

describe("ui message stream", () => {
  it("first message is HELLO with role ui and subscriptions", () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    expect(sockets[0].sent.length).toBe(1);
    const hello = decode(sockets[0].sent[0]);
    expect(hello.type).toBe("HELLO");
    expect(hello.payload.role).toBe("ui");
    expect(hello.payload.subscriptions).toEqual(["frames", "peers", "events"]);
  });

  it("teleop drives a CMD stream with monotone seq and correct payloads", () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    const teleop = new TeleopLoop((t, s) => client.sendCommand("V1", t, s));
    teleop.keyDown("ArrowUp");
    teleop.tick();
    teleop.keyDown("ArrowLeft");
    teleop.tick();
    teleop.keyUp("ArrowUp");
    teleop.keyUp("ArrowLeft");
    teleop.tick();
    teleop.tick(); // silent: zero already confirmed

    const cmds = sockets[0].sent.map(decode).filter((m) => m.type === "CMD");
    expect(cmds.map((m) => [m.payload.throttle, m.payload.steering])).toEqual([
      [1, 0],
      [1, 1],
      [0, 0],
    ]);
    expect(cmds.every((m) => m.vehicle_id === "V1")).toBe(true);
    const seqs = cmds.map((m) => m.seq);
    expect([...seqs].sort((a, b) => a - b)).toEqual(seqs);
    expect(new Set(seqs).size).toBe(seqs.length);
  });

  it("stops the stream within one period of losing control", () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    const teleop = new TeleopLoop((t, s) => client.sendCommand("V1", t, s));
    teleop.keyDown("KeyW");
    teleop.tick();
    // server revokes control
    teleop.disable();
    teleop.tick();
    teleop.tick();
    const cmds = sockets[0].sent.map(decode).filter((m) => m.type === "CMD");
    expect(cmds.length).toBe(2);
    expect(cmds[1].payload).toEqual({ throttle: 0, steering: 0 });
  });

  it("reconnects with doubling backoff and fresh HELLO", () => {
    const { client, sockets, timeouts, statuses } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].onclose?.(); // bridge went away
    expect(statuses).toContain("disconnected");
    expect(timeouts.length).toBe(1);
    expect(timeouts[0].ms).toBe(100);
    timeouts[0].fn(); // timer fires -> second socket
    expect(sockets.length).toBe(2);
    sockets[1].onclose?.();
    expect(timeouts[1].ms).toBe(200); // doubled
    timeouts[1].fn();
    sockets[2].open();
    const hello = decode(sockets[2].sent[0]);
    expect(hello.type).toBe("HELLO");
  });

  it("no reconnect after an explicit close", () => {
    const { client, sockets, timeouts } = harness();
    client.connect();
    sockets[0].open();
    client.close();
    expect(timeouts.length).toBe(0);
    expect(sockets[0].closed).toBe(true);
  });

  it("passes decoded server messages to the handler and flags connection", () => {
    const { client, sockets, statuses, received } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].receive(message("ACK", { payload: { code: "OK", snapshot: { scene: "x", vehicles: {}, elements: {}, bounds: [0, 0, 1, 1], scene_geometry: { collision: [], lane_bounds: [] }, t: 0, dt: 0.01 } } }));
    sockets[0].receive(message("FRAME", { vehicle_id: "V1", timestamp: 0.1, payload: {} }));
    expect(statuses).toContain("connected");
    expect(received).toEqual(["ACK", "FRAME"]);
  });

  it("record controls emit the documented RECORD actions", () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    client.record("start");
    client.record("stop");
    client.record("export");
    const actions = sockets[0].sent.map(decode).filter((m) => m.type === "RECORD").map((m) => m.payload);
    expect(actions).toEqual([
      { action: "start" },
      { action: "stop" },
      { action: "export", inline: true },
    ]);
  });
});
