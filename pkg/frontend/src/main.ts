// DOM wiring: chat panel + canvas world view against the gateway.

import { connectGateway } from "./net.js";
import { paint, render } from "./render.js";
import {
  applyServerEvent,
  initialViewModel,
  setConnected,
  submitUtterance,
  ViewModel,
} from "./viewmodel.js";

const canvas = document.getElementById("world") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const history = document.getElementById("history")!;
const input = document.getElementById("utterance") as HTMLInputElement;
const sendButton = document.getElementById("send") as HTMLButtonElement;
const status = document.getElementById("status")!;
const banner = document.getElementById("banner")!;
const inspector = document.getElementById("inspector")!;

let vm: ViewModel = initialViewModel();

function update(next: ViewModel): void {
  vm = next;
  redraw();
}

function redraw(): void {
  paint(ctx, render(vm, canvas.width, canvas.height), canvas.width,
        canvas.height);

  history.replaceChildren();
  for (const line of vm.dialog) {
    const el = document.createElement("div");
    el.className = `line ${line.role}`;
    el.textContent = `${line.role === "user" ? "you" : "robot"}: ${line.text}`;
    history.appendChild(el);
  }
  history.scrollTop = history.scrollHeight;

  status.textContent = vm.connected ? "connected" : "disconnected";
  status.className = vm.connected ? "ok" : "down";
  banner.textContent = vm.banner ?? "";
  banner.style.display = vm.banner ? "block" : "none";
  input.disabled = !vm.connected;
  sendButton.disabled = !vm.connected;
  input.classList.toggle("pending", vm.pendingInput);
  if (vm.pendingInput) {
    input.focus();
  }
  inspector.textContent = vm.traces.length
    ? vm.traces[vm.traces.length - 1]
    : "(no trace yet)";
}

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://` +
  `${location.host}/ws`;
const gateway = connectGateway(wsUrl, {
  onEvent: (event) => update(applyServerEvent(vm, event)),
  onStatus: (connected) => update(setConnected(vm, connected)),
});

function submit(): void {
  const { vm: next, outbound } = submitUtterance(vm, input.value);
  update(next);
  if (outbound) {
    gateway.send(outbound);
    input.value = "";
  }
}

sendButton.addEventListener("click", submit);
input.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    submit();
  }
});

redraw();
