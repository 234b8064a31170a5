import { describe, expect, it } from "vitest";

import { applyMessage, initialViewModel } from "../src/state.js";
import { SnapshotMsg, StartedMsg } from "../src/protocol.js";

const started: StartedMsg = {
  type: "started",
  v: "v1",
  session: "session-1",
  self_id: "human",
  tick: 0,
  tick_period_s: 1,
  separation_d: 0.2,
  agents: [
    { id: "human", sector: "N", role: "human" },
    { id: "agent-1", sector: "S", role: "sorts" },
  ],
  reference: [
    [0, 10, 0.3],
    [0, 0, 0],
  ],
  goal: [0, 0, 0],
};

function snap(tick: number, dx = 0): SnapshotMsg {
  return {
    type: "snapshot",
    v: "v1",
    tick,
    agents: [
      { id: "human", role: "human", x: dx, y: 5, z: 0.3, heading: 0, airspeed: 0.04 },
      { id: "agent-1", role: "sorts", x: dx + 1, y: -5, z: 0.3, heading: 3.1, airspeed: 0.04 },
    ],
    events: [],
    decision_summary: {},
  };
}

describe("view model", () => {
  it("applies snapshots in order and accumulates trails", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    applyMessage(vm, snap(1, 0));
    applyMessage(vm, snap(2, 0.8));
    expect(vm.tick).toBe(2);
    expect(vm.trails.get("human")).toHaveLength(2);
    expect(vm.trails.get("agent-1")).toHaveLength(2);
  });

  it("drops frames whose tick regresses and logs an error", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    applyMessage(vm, snap(3));
    applyMessage(vm, snap(2, 99));
    expect(vm.tick).toBe(3);
    expect(vm.snapshot!.agents[0].x).toBe(0); // regressed frame not rendered
    expect(vm.errors.some((e) => e.includes("regression"))).toBe(true);
  });

  it("keeps the last good frame and shows a banner on malformed snapshots", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    applyMessage(vm, snap(1));
    const broken = { type: "snapshot", v: "v1", tick: 2, agents: [{ id: "x" }] };
    applyMessage(vm, broken as unknown as SnapshotMsg);
    expect(vm.tick).toBe(1);
    expect(vm.snapshot!.agents).toHaveLength(2);
    expect(vm.banner).toBe("malformed snapshot");
  });

  it("shows only server-acknowledged control values", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    expect(vm.ackedControl).toBeNull(); // nothing displayed before the first ack
    applyMessage(vm, {
      type: "ack",
      status: "ok",
      tick: 1,
      airspeed: 0.045,
      vertical_rate: -0.001,
      heading_rate: 0.011,
      primitive: 42,
    });
    expect(vm.ackedControl).toEqual({
      airspeed: 0.045,
      vertical_rate: -0.001,
      heading_rate: 0.011,
    });
  });

  it("surfaces rejected controls via the banner", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    applyMessage(vm, { type: "ack", status: "rejected", current_tick: 7 });
    expect(vm.banner).toContain("tick 7");
  });

  it("stores the final result", () => {
    const vm = initialViewModel();
    applyMessage(vm, started);
    applyMessage(vm, {
      type: "result",
      v: "v1",
      result: { agents: [{ id: "human", outcome: "success" }], ls_matrix: [[0]] },
    });
    expect(vm.result!.agents[0].outcome).toBe("success");
  });
});
