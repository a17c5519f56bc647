// Pure view state: server events fold in, submissions fold out.

import type { UtteranceMessage, WorldSnapshot } from "./protocol.js";

export interface DialogLine {
  role: "user" | "robot";
  text: string;
}

export interface ViewModel {
  world: WorldSnapshot | null;
  dialog: DialogLine[];
  traces: string[]; // canonical n-tuple texts, newest last
  connected: boolean;
  pendingInput: boolean; // an unanswered clarification question
  banner: string | null;
}

export function initialViewModel(): ViewModel {
  return {
    world: null,
    dialog: [],
    traces: [],
    connected: false,
    pendingInput: false,
    banner: null,
  };
}

function isQuestion(text: string): boolean {
  return text.trimEnd().endsWith("?");
}

/** Fold one gateway event into the view model; unknown events are ignored. */
export function applyServerEvent(vm: ViewModel, event: unknown): ViewModel {
  if (typeof event !== "object" || event === null || !("type" in event)) {
    return vm;
  }
  const ev = event as Record<string, unknown>;
  switch (ev.type) {
    case "dialog": {
      const role = ev.role === "user" ? "user" : "robot";
      const text = String(ev.text ?? "");
      return {
        ...vm,
        dialog: [...vm.dialog, { role, text }],
        pendingInput: role === "robot" ? isQuestion(text) : vm.pendingInput,
      };
    }
    case "world":
      return { ...vm, world: ev.snapshot as WorldSnapshot };
    case "trace":
      return { ...vm, traces: [...vm.traces, String(ev.ntuple ?? "")] };
    default:
      console.debug("ignoring unknown gateway event", ev.type);
      return vm;
  }
}

export function setConnected(vm: ViewModel, connected: boolean): ViewModel {
  return {
    ...vm,
    connected,
    banner: connected ? null : "Disconnected from gateway.",
  };
}

export interface Submission {
  vm: ViewModel;
  outbound: UtteranceMessage | null;
}

/** Outbound utterance; appends the user line locally and clears pending. */
export function submitUtterance(vm: ViewModel, text: string): Submission {
  const trimmed = text.trim();
  if (!trimmed) {
    return { vm, outbound: null };
  }
  if (!vm.connected) {
    return {
      vm: { ...vm, banner: "Not connected: utterance was not sent." },
      outbound: null,
    };
  }
  return {
    vm: {
      ...vm,
      dialog: [...vm.dialog, { role: "user", text: trimmed }],
      pendingInput: false,
      banner: null,
    },
    outbound: { type: "utterance", text: trimmed },
  };
}
