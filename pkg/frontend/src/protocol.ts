// Wire schema "v1" spoken by the live service, plus the shared control grid.

export interface AgentSnapshot {
  id: string;
  role: string;
  x: number;
  y: number;
  z: number;
  heading: number;
  airspeed: number;
}

export interface SnapshotMsg {
  type: "snapshot";
  v: "v1";
  tick: number;
  agents: AgentSnapshot[];
  events: string[];
  decision_summary: Record<string, unknown>;
}

export interface StartedMsg {
  type: "started";
  v: "v1";
  session: string;
  self_id: string;
  tick: number;
  tick_period_s: number;
  separation_d: number;
  agents: { id: string; sector: string; role: string }[];
  reference: [number, number, number][];
  goal: [number, number, number];
}

export interface AckMsg {
  type: "ack";
  status: "ok" | "rejected" | "paused" | "resumed";
  tick?: number;
  current_tick?: number;
  airspeed?: number;
  vertical_rate?: number;
  heading_rate?: number;
  primitive?: number;
}

export interface ResultMsg {
  type: "result";
  v: "v1";
  result: { agents: { id: string; outcome: string }[]; ls_matrix: number[][] };
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = SnapshotMsg | StartedMsg | AckMsg | ResultMsg | ErrorMsg;

export interface ControlTriple {
  airspeed: number;
  vertical_rate: number;
  heading_rate: number;
}

// The motion-primitive grid; controls snap to these on the server, and the
// keyboard mapping steps through them so requested == acked in the common case.
export const AIRSPEEDS = [0.03, 0.035, 0.04, 0.045, 0.05, 0.055];
export const VERTICAL_RATES = [-0.005, -0.0025, -0.001, 0, 0.001, 0.0025];
export const HEADING_CHANGES = [-90, -45, -15, 0, 15, 45, 90].map(
  (deg) => (deg * Math.PI) / 180,
);
export const PRIMITIVE_DURATION_S = 20;
export const HEADING_RATES = HEADING_CHANGES.map((c) => c / PRIMITIVE_DURATION_S);

export function isSnapshot(msg: unknown): msg is SnapshotMsg {
  const m = msg as SnapshotMsg;
  return (
    !!m &&
    m.type === "snapshot" &&
    typeof m.tick === "number" &&
    Array.isArray(m.agents) &&
    m.agents.every(
      (a) =>
        typeof a.id === "string" &&
        typeof a.x === "number" &&
        typeof a.y === "number" &&
        typeof a.z === "number" &&
        typeof a.heading === "number",
    )
  );
}
