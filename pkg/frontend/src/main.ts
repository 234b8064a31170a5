// Entry point: wires the socket, view-model, keyboard, and render loop.

import { Connection } from "./net.js";
import { ControlState } from "./input.js";
import { drawScene } from "./render.js";
import { buildScene } from "./scene.js";
import { applyMessage, initialViewModel } from "./state.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

function main(): void {
  const canvas = document.getElementById("map") as HTMLCanvasElement;
  const status = document.getElementById("status") as HTMLElement;
  const controls = document.getElementById("controls") as HTMLElement;

  const vm = initialViewModel();
  const input = new ControlState();
  const conn = new Connection();

  const server = param("server", `ws://${window.location.host}`);
  const session = param("session", "");
  const sector = param("sector", "N");
  const opponent = param("opponent", "sorts");

  conn.onStatus = (s) => {
    vm.connection = s;
    if (s === "open" && !session) {
      conn.send({ type: "start", sector, opponent });
    }
  };
  conn.onMessage = (msg) => {
    applyMessage(vm, msg);
    if (msg.type === "started") {
      conn.tickPeriodMs = msg.tick_period_s * 1000;
    }
  };
  conn.onStaleDrop = () => {
    vm.staleInput = true;
  };
  conn.connect(session ? `${server}/ws?session=${session}` : `${server}/ws`);

  window.addEventListener("keydown", (ev) => {
    if (ev.repeat && ev.key !== "ArrowLeft" && ev.key !== "ArrowRight") return;
    if (input.onKey(ev.key)) {
      ev.preventDefault();
      conn.sendControl(input.triple(), vm.tick + 1);
    }
  });

  function frame(): void {
    conn.flushPending();
    drawScene(canvas, buildScene(vm), vm.banner);
    const acked = vm.ackedControl;
    controls.textContent = acked
      ? `spd ${(acked.airspeed * 1000).toFixed(0)} m/s | ` +
        `vs ${(acked.vertical_rate * 1000).toFixed(1)} m/s | ` +
        `turn ${((acked.heading_rate * 180) / Math.PI * 20).toFixed(0)} deg/20s`
      : "no acknowledged control yet";
    const outcome = vm.result
      ? ` | result: ${vm.result.agents.map((a) => `${a.id}=${a.outcome}`).join(" ")}`
      : "";
    status.textContent =
      `${vm.connection} | tick ${vm.tick}` +
      (vm.staleInput ? " | INPUT STALE" : "") +
      outcome;
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

main();
