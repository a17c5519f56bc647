// Top-down world rendering as a pure function: snapshot in, draw ops out.
// Keeping the op list explicit makes renders comparable in tests; the canvas
// painter below is a thin interpreter.

import type { ObjectSnapshot, WorldSnapshot } from "./protocol.js";
import type { ViewModel } from "./viewmodel.js";

export type DrawOp =
  | { kind: "clear"; color: string }
  | { kind: "rect"; x: number; y: number; w: number; h: number;
      fill: string | null; stroke: string | null }
  | { kind: "circle"; x: number; y: number; r: number; fill: string;
      stroke: string | null }
  | { kind: "poly"; points: [number, number][]; fill: string }
  | { kind: "text"; x: number; y: number; text: string; color: string;
      size: number };

const OBJECT_COLORS: Record<string, string> = {
  red: "#c0392b",
  blue: "#2a6fb8",
  green: "#27862c",
};

const PADDING_M = 0.75;

interface Frame {
  scale: number;
  ox: number;
  oy: number;
  height: number;
}

function worldFrame(world: WorldSnapshot, width: number,
                    height: number): Frame {
  let xMin = Infinity, yMin = Infinity, xMax = -Infinity, yMax = -Infinity;
  for (const r of world.regions) {
    xMin = Math.min(xMin, r.footprint[0]);
    yMin = Math.min(yMin, r.footprint[1]);
    xMax = Math.max(xMax, r.footprint[2]);
    yMax = Math.max(yMax, r.footprint[3]);
  }
  if (!isFinite(xMin)) {
    xMin = yMin = 0;
    xMax = yMax = 1;
  }
  xMin -= PADDING_M;
  yMin -= PADDING_M;
  xMax += PADDING_M;
  yMax += PADDING_M;
  const scale = Math.min(width / (xMax - xMin), height / (yMax - yMin));
  return { scale, ox: xMin, oy: yMin, height };
}

function toPx(frame: Frame, x: number, y: number): [number, number] {
  // world y grows upward; canvas y grows downward
  return [(x - frame.ox) * frame.scale,
          frame.height - (y - frame.oy) * frame.scale];
}

function colorFor(obj: ObjectSnapshot): string {
  const c = obj.properties["color"];
  return (typeof c === "string" && OBJECT_COLORS[c]) || "#777777";
}

export function render(vm: ViewModel, width: number,
                       height: number): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "clear", color: "#f4f1e8" }];
  const world = vm.world;
  if (!world) {
    ops.push({ kind: "text", x: width / 2, y: height / 2,
               text: "waiting for world...", color: "#555555", size: 14 });
    return ops;
  }
  const frame = worldFrame(world, width, height);

  for (const region of world.regions) {
    const [x0, y0] = toPx(frame, region.footprint[0], region.footprint[3]);
    const [x1, y1] = toPx(frame, region.footprint[2], region.footprint[1]);
    ops.push({
      kind: "rect", x: x0, y: y0, w: x1 - x0, h: y1 - y0,
      fill: region.surface_height > 0 ? "#e2d7bd" : "#e9e6db",
      stroke: "#8d8468",
    });
    ops.push({ kind: "text", x: x0 + 4, y: y0 + 14, text: region.name,
               color: "#6b6450", size: 11 });
  }

  const heldId = world.robot.holding;
  for (const obj of world.objects) {
    if (obj.id === heldId) {
      continue; // drawn attached to the robot below
    }
    const [x, y] = toPx(frame, obj.x, obj.y);
    ops.push({ kind: "circle", x, y, r: 7, fill: colorFor(obj),
               stroke: "#3d3a30" });
    ops.push({ kind: "text", x: x + 9, y: y + 4, text: obj.id,
               color: "#3d3a30", size: 10 });
  }

  const [rx, ry] = toPx(frame, world.robot.x, world.robot.y);
  const heading = -world.robot.theta; // canvas y-flip mirrors angles
  const tri: [number, number][] = [];
  for (const a of [0, (2.5 * Math.PI) / 3, -(2.5 * Math.PI) / 3]) {
    const r = a === 0 ? 14 : 10;
    tri.push([rx + r * Math.cos(heading + a), ry + r * Math.sin(heading + a)]);
  }
  ops.push({ kind: "poly", points: tri, fill: "#2f2f38" });
  ops.push({ kind: "text", x: rx + 12, y: ry - 10, text: world.robot.id,
             color: "#2f2f38", size: 11 });

  if (heldId) {
    const held = world.objects.find((o) => o.id === heldId);
    if (held) {
      ops.push({ kind: "circle", x: rx, y: ry - 16, r: 6,
                 fill: colorFor(held), stroke: "#ffffff" });
      ops.push({ kind: "text", x: rx + 10, y: ry - 18,
                 text: `holding ${held.id}`, color: "#2f2f38", size: 10 });
    }
  }
  return ops;
}

export function paint(ctx: CanvasRenderingContext2D, ops: DrawOp[],
                      width: number, height: number): void {
  for (const op of ops) {
    switch (op.kind) {
      case "clear":
        ctx.fillStyle = op.color;
        ctx.fillRect(0, 0, width, height);
        break;
      case "rect":
        if (op.fill) {
          ctx.fillStyle = op.fill;
          ctx.fillRect(op.x, op.y, op.w, op.h);
        }
        if (op.stroke) {
          ctx.strokeStyle = op.stroke;
          ctx.strokeRect(op.x, op.y, op.w, op.h);
        }
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, 2 * Math.PI);
        ctx.fillStyle = op.fill;
        ctx.fill();
        if (op.stroke) {
          ctx.strokeStyle = op.stroke;
          ctx.stroke();
        }
        break;
      case "poly":
        ctx.beginPath();
        ctx.moveTo(op.points[0][0], op.points[0][1]);
        for (const [x, y] of op.points.slice(1)) {
          ctx.lineTo(x, y);
        }
        ctx.closePath();
        ctx.fillStyle = op.fill;
        ctx.fill();
        break;
      case "text":
        ctx.fillStyle = op.color;
        ctx.font = `${op.size}px sans-serif`;
        ctx.fillText(op.text, op.x, op.y);
        break;
    }
  }
}
