import type { WorldSnapshot } from "../src/protocol.js";

export function labSnapshot(): WorldSnapshot {
  return {
    regions: [
      { name: "table", footprint: [2.0, 2.0, 3.4, 3.2], surface_height: 0.75 },
      { name: "user", footprint: [0.0, 0.0, 0.8, 0.8], surface_height: 0.0 },
    ],
    objects: [
      { id: "marker_blue", type: "marker", properties: { color: "blue" },
        x: 3.0, y: 2.8, level: "floor" },
      { id: "marker_red", type: "marker", properties: { color: "red" },
        x: 2.3, y: 2.5, level: "floor" },
    ],
    robot: { id: "darwin", x: 0.4, y: 0.4, theta: 0.0, holding: null },
  };
}

export function holdingSnapshot(): WorldSnapshot {
  const snap = labSnapshot();
  snap.robot = { ...snap.robot, x: 2.6, y: 2.5, holding: "marker_blue" };
  snap.objects = snap.objects.map((o) =>
    o.id === "marker_blue"
      ? { ...o, x: 2.6, y: 2.5, level: "held:darwin" }
      : o);
  return snap;
}
