import { describe, expect, it } from "vitest";

import { ControlState } from "../src/input.js";
import { AIRSPEEDS, HEADING_RATES, VERTICAL_RATES } from "../src/protocol.js";

describe("keyboard control mapping", () => {
  it("starts at cruise, level, straight", () => {
    const c = new ControlState();
    expect(c.triple()).toEqual({ airspeed: 0.04, vertical_rate: 0, heading_rate: 0 });
  });

  it("holding the left-turn key saturates at the most-negative heading rate", () => {
    const c = new ControlState();
    for (let i = 0; i < 10; i++) c.onKey("ArrowLeft");
    expect(c.triple().heading_rate).toBe(Math.min(...HEADING_RATES));
  });

  it("steps one grid point per press", () => {
    const c = new ControlState();
    c.onKey("ArrowLeft");
    expect(c.triple().heading_rate).toBe(HEADING_RATES[HEADING_RATES.indexOf(0) - 1]);
    c.onKey("ArrowRight");
    c.onKey("ArrowRight");
    expect(c.triple().heading_rate).toBe(HEADING_RATES[HEADING_RATES.indexOf(0) + 1]);
  });

  it("clamps airspeed and vertical rate to the grid ends", () => {
    const c = new ControlState();
    for (let i = 0; i < 10; i++) c.onKey("ArrowUp");
    expect(c.triple().airspeed).toBe(Math.max(...AIRSPEEDS));
    for (let i = 0; i < 20; i++) c.onKey("s");
    expect(c.triple().vertical_rate).toBe(Math.min(...VERTICAL_RATES));
  });

  it("space levels the wings", () => {
    const c = new ControlState();
    c.onKey("ArrowLeft");
    c.onKey(" ");
    expect(c.triple().heading_rate).toBe(0);
  });

  it("every commanded triple lies on the primitive grid", () => {
    const c = new ControlState();
    const keys = ["ArrowLeft", "ArrowUp", "w", "ArrowRight", "s", "ArrowDown", " "];
    for (const k of [...keys, ...keys]) {
      c.onKey(k);
      const t = c.triple();
      expect(AIRSPEEDS).toContain(t.airspeed);
      expect(VERTICAL_RATES).toContain(t.vertical_rate);
      expect(HEADING_RATES).toContain(t.heading_rate);
    }
  });

  it("ignores unmapped keys", () => {
    const c = new ControlState();
    expect(c.onKey("q")).toBe(false);
  });
});
