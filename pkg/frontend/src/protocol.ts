// Gateway wire protocol (one JSON object per WebSocket message).

export interface RegionSnapshot {
  name: string;
  footprint: [number, number, number, number]; // x_min, y_min, x_max, y_max
  surface_height: number;
}

export interface ObjectSnapshot {
  id: string;
  type: string;
  properties: Record<string, string | number>;
  x: number;
  y: number;
  level: string; // "floor" | "surface:REGION" | "held:ROBOT"
}

export interface RobotSnapshot {
  id: string;
  x: number;
  y: number;
  theta: number;
  holding: string | null;
}

export interface WorldSnapshot {
  regions: RegionSnapshot[];
  objects: ObjectSnapshot[];
  robot: RobotSnapshot;
}

export type ServerEvent =
  | { type: "dialog"; role: "user" | "robot"; text: string }
  | { type: "world"; snapshot: WorldSnapshot }
  | { type: "trace"; ntuple: string };

export interface UtteranceMessage {
  type: "utterance";
  text: string;
}
