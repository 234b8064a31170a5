// Pure scene construction: view-model in, display list out. The canvas
// backend just draws items, which keeps glyph/trail/ring logic testable.

import { ViewModel } from "./state.js";

export interface AircraftGlyph {
  kind: "aircraft";
  id: string;
  x: number;
  y: number;
  heading: number;
  altitudeTag: string;
  isSelf: boolean;
}

export interface ScenePolyline {
  kind: "polyline";
  role: "reference" | "trail";
  dashed: boolean;
  points: [number, number][];
  agentId: string | null;
}

export interface SeparationRing {
  kind: "ring";
  x: number;
  y: number;
  radius: number;
  alert: boolean;
}

export interface RunwayMark {
  kind: "runway";
  x: number;
  y: number;
}

export type SceneItem = AircraftGlyph | ScenePolyline | SeparationRing | RunwayMark;

export function buildScene(vm: ViewModel): SceneItem[] {
  const items: SceneItem[] = [];
  if (!vm.started || !vm.snapshot) return items;

  items.push({ kind: "runway", x: vm.started.goal[0], y: vm.started.goal[1] });

  // The own-ship reference pattern is drawn solid per the figure convention.
  items.push({
    kind: "polyline",
    role: "reference",
    dashed: false,
    points: vm.started.reference.map((w) => [w[0], w[1]]),
    agentId: vm.selfId,
  });

  for (const [agentId, trail] of vm.trails) {
    items.push({
      kind: "polyline",
      role: "trail",
      dashed: true,
      points: trail.slice(),
      agentId,
    });
  }

  const self = vm.snapshot.agents.find((a) => a.id === vm.selfId);
  for (const agent of vm.snapshot.agents) {
    items.push({
      kind: "aircraft",
      id: agent.id,
      x: agent.x,
      y: agent.y,
      heading: agent.heading,
      altitudeTag: `${Math.round(agent.z * 1000)}m`,
      isSelf: agent.id === vm.selfId,
    });
  }

  if (self) {
    const d = vm.started.separation_d;
    const alert = vm.snapshot.agents.some((a) => {
      if (a.id === self.id) return false;
      const dist = Math.hypot(a.x - self.x, a.y - self.y, a.z - self.z);
      return dist < 2 * d;
    });
    items.push({ kind: "ring", x: self.x, y: self.y, radius: d, alert });
  }
  return items;
}
