// Client view-model: every displayed kinematic quantity originates from a
// server snapshot; displayed control values always equal the last
// server-acknowledged (quantized) triple.

import {
  AckMsg,
  ControlTriple,
  ResultMsg,
  ServerMsg,
  SnapshotMsg,
  StartedMsg,
  isSnapshot,
} from "./protocol.js";

export interface ViewModel {
  connection: "connecting" | "open" | "closed";
  started: StartedMsg | null;
  selfId: string | null;
  tick: number; // last rendered tick; never decreases
  snapshot: SnapshotMsg | null;
  trails: Map<string, [number, number][]>;
  ackedControl: ControlTriple | null;
  result: ResultMsg["result"] | null;
  banner: string | null;
  staleInput: boolean;
  errors: string[];
}

export function initialViewModel(): ViewModel {
  return {
    connection: "connecting",
    started: null,
    selfId: null,
    tick: -1,
    snapshot: null,
    trails: new Map(),
    ackedControl: null,
    result: null,
    banner: null,
    staleInput: false,
    errors: [],
  };
}

export function applyMessage(vm: ViewModel, msg: ServerMsg): ViewModel {
  switch (msg.type) {
    case "started":
      vm.started = msg;
      vm.selfId = msg.self_id;
      vm.banner = null;
      return vm;
    case "snapshot":
      return applySnapshot(vm, msg);
    case "ack":
      return applyAck(vm, msg);
    case "result":
      vm.result = msg.result;
      return vm;
    case "error":
      vm.banner = msg.message;
      vm.errors.push(msg.message);
      return vm;
    default:
      vm.errors.push(`unknown message ${(msg as { type?: string }).type}`);
      return vm;
  }
}

function applySnapshot(vm: ViewModel, msg: SnapshotMsg): ViewModel {
  if (!isSnapshot(msg)) {
    // Keep the last good frame on malformed input; surface a banner.
    vm.banner = "malformed snapshot";
    vm.errors.push("malformed snapshot");
    return vm;
  }
  if (msg.tick <= vm.tick) {
    vm.errors.push(`tick regression: got ${msg.tick}, already at ${vm.tick}`);
    return vm; // frame dropped
  }
  vm.tick = msg.tick;
  vm.snapshot = msg;
  vm.banner = null;
  for (const agent of msg.agents) {
    const trail = vm.trails.get(agent.id) ?? [];
    trail.push([agent.x, agent.y]);
    vm.trails.set(agent.id, trail);
  }
  return vm;
}

function applyAck(vm: ViewModel, msg: AckMsg): ViewModel {
  if (msg.status === "ok") {
    // Reconcile: the server's quantized values are the truth on screen.
    vm.ackedControl = {
      airspeed: msg.airspeed ?? 0,
      vertical_rate: msg.vertical_rate ?? 0,
      heading_rate: msg.heading_rate ?? 0,
    };
    vm.staleInput = false;
  } else if (msg.status === "rejected") {
    vm.banner = `control rejected (server at tick ${msg.current_tick})`;
  }
  return vm;
}
