// Canvas backend: draws a display list in an airport-centered, north-up view.

import { SceneItem } from "./scene.js";

const VIEW_SPAN_KM = 24; // world width mapped onto the canvas

export function drawScene(
  canvas: HTMLCanvasElement,
  items: SceneItem[],
  banner: string | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const scale = canvas.width / VIEW_SPAN_KM;
  const toX = (x: number) => canvas.width / 2 + x * scale;
  const toY = (y: number) => canvas.height / 2 - y * scale;

  ctx.fillStyle = "#0b1e2d";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  for (const item of items) {
    if (item.kind === "polyline") {
      ctx.strokeStyle = item.role === "reference" ? "#7fd4ff" : "#e8e8e8";
      ctx.lineWidth = item.role === "reference" ? 1.5 : 1.0;
      ctx.setLineDash(item.dashed ? [6, 5] : []);
      ctx.beginPath();
      item.points.forEach(([x, y], i) =>
        i === 0 ? ctx.moveTo(toX(x), toY(y)) : ctx.lineTo(toX(x), toY(y)),
      );
      ctx.stroke();
      ctx.setLineDash([]);
    } else if (item.kind === "runway") {
      ctx.fillStyle = "#cccccc";
      ctx.fillRect(toX(item.x) - 10, toY(item.y) - 2, 20, 4);
    } else if (item.kind === "ring") {
      ctx.strokeStyle = item.alert ? "#ff4040" : "#49b675";
      ctx.lineWidth = item.alert ? 2.5 : 1.0;
      ctx.beginPath();
      ctx.arc(toX(item.x), toY(item.y), item.radius * scale, 0, 2 * Math.PI);
      ctx.stroke();
    } else if (item.kind === "aircraft") {
      const px = toX(item.x);
      const py = toY(item.y);
      ctx.save();
      ctx.translate(px, py);
      ctx.rotate(-item.heading); // world CCW-positive, canvas y inverted
      ctx.fillStyle = item.isSelf ? "#ffd24d" : "#ff8c69";
      ctx.beginPath();
      ctx.moveTo(9, 0);
      ctx.lineTo(-6, 5);
      ctx.lineTo(-6, -5);
      ctx.closePath();
      ctx.fill();
      ctx.restore();
      ctx.fillStyle = "#ffffff";
      ctx.font = "11px sans-serif";
      ctx.fillText(`${item.id} ${item.altitudeTag}`, px + 10, py - 8);
    }
  }

  if (banner) {
    ctx.fillStyle = "#ff4040";
    ctx.fillRect(0, 0, canvas.width, 24);
    ctx.fillStyle = "#ffffff";
    ctx.font = "13px sans-serif";
    ctx.fillText(banner, 8, 16);
  }
}
