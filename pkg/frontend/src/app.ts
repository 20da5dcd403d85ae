/**
 * Browser entry point: wires the widgets in index.html to the socket
 * client, the console state, and the dashboard painter.
 */

import { InputEmitter } from "./inputs.js";
import { buildDashboard } from "./render.js";
import { SessionSocket } from "./socket.js";
import {
  applyHello,
  applySnapshot,
  applyStatus,
  createState,
  inputsEnabled,
  noteEstopSent,
  noteWarning,
} from "./state.js";
import { buildViewModel } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in index.html`);
  return node as T;
}

const urlInput = byId<HTMLInputElement>("ws-url");
const connectBtn = byId<HTMLButtonElement>("connect");
const tangential = byId<HTMLInputElement>("tangential");
const tangentialOut = byId<HTMLElement>("tangential-out");
const orthogonal = byId<HTMLInputElement>("orthogonal");
const orthogonalOut = byId<HTMLElement>("orthogonal-out");
const orthoAngle = byId<HTMLSelectElement>("ortho-angle");
const modality = byId<HTMLSelectElement>("modality");
const spasmBtn = byId<HTMLButtonElement>("spasm");
const pauseBtn = byId<HTMLButtonElement>("pause");
const resumeBtn = byId<HTMLButtonElement>("resume");
const resetBtn = byId<HTMLButtonElement>("reset");
const estopBtn = byId<HTMLButtonElement>("estop");

const params = new URLSearchParams(location.search);
urlInput.value = params.get("ws") ?? "ws://127.0.0.1:8765/ws";

const state = createState();
const dashboard = buildDashboard(byId("dashboard"));

let socket: SessionSocket | null = null;

const emitter = new InputEmitter({
  send: (cmd) => socket?.send(cmd) ?? false,
  getForce: () => ({
    tangential_n: state.inputs.tangential_n,
    orthogonal_n: state.inputs.orthogonal_n,
    orthogonal_angle: state.inputs.orthogonal_angle,
  }),
  onDrop: (what) => {
    noteWarning(state, `not connected, dropped ${what}`);
    repaint();
  },
});

function repaint(): void {
  dashboard.paint(buildViewModel(state));
  const enabled = inputsEnabled(state);
  for (const widget of [tangential, orthogonal, orthoAngle, modality, spasmBtn, pauseBtn, resumeBtn]) {
    widget.disabled = !enabled;
  }
  // estop and reset stay live while streaming so an estop can always fire
  // and a latched stop can always be cleared
  estopBtn.disabled = state.status !== "streaming";
  resetBtn.disabled = state.status !== "streaming";
  connectBtn.textContent = socket ? "disconnect" : "connect";
}

function connect(): void {
  socket = new SessionSocket({
    url: urlInput.value.trim(),
    onSnapshot: (snap) => {
      applySnapshot(state, snap);
      repaint();
    },
    onHello: (hello) => {
      applyHello(state, hello);
      noteWarning(state, "");
      repaint();
    },
    onServerError: (message) => {
      noteWarning(state, `service: ${message}`);
      repaint();
    },
    onStatus: (status, detail) => {
      applyStatus(state, status, detail);
      repaint();
    },
  });
  socket.connect();
}

function disconnect(): void {
  emitter.dispose();
  socket?.disconnect();
  socket = null;
  repaint();
}

connectBtn.addEventListener("click", () => (socket ? disconnect() : connect()));

tangential.addEventListener("input", () => {
  state.inputs.tangential_n = Number(tangential.value);
  tangentialOut.textContent = `${state.inputs.tangential_n.toFixed(1)} N`;
  emitter.forceChanged();
});

orthogonal.addEventListener("input", () => {
  state.inputs.orthogonal_n = Number(orthogonal.value);
  orthogonalOut.textContent = `${state.inputs.orthogonal_n.toFixed(1)} N`;
  emitter.forceChanged();
});

orthoAngle.addEventListener("change", () => {
  state.inputs.orthogonal_angle = Number(orthoAngle.value);
  emitter.forceChanged();
});

modality.addEventListener("change", () => {
  state.inputs.modality = modality.value as typeof state.inputs.modality;
  emitter.setModality(state.inputs.modality);
});

spasmBtn.addEventListener("click", () => emitter.spasm());
pauseBtn.addEventListener("click", () => emitter.pause());
resumeBtn.addEventListener("click", () => emitter.resume());
resetBtn.addEventListener("click", () => emitter.reset());
estopBtn.addEventListener("click", () => {
  noteEstopSent(state);
  emitter.estop();
  repaint();
});

repaint();
