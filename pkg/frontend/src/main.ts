// Browser entry point: wires the bridge client, keyboard teleop, the
// canvas renderer, and the control buttons to the DOM.

import { BridgeClient } from "./client.js";
import { hudLines, renderScene } from "./render.js";
import { cycleLight } from "./scm.js";
import { initialState, reduce, setConnection, type UiSessionState } from "./state.js";
import { SEND_PERIOD_MS, TeleopLoop } from "./teleop.js";

const params = new URLSearchParams(location.search);
const bridgeUrl = params.get("bridge") ?? "ws://127.0.0.1:8700";
const scmUrl = params.get("scm") ?? "http://127.0.0.1:8800";

let state: UiSessionState = initialState();

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const hud = document.getElementById("hud")!;
const toastBox = document.getElementById("toasts")!;
const lightPanel = document.getElementById("lights")!;

const client = new BridgeClient(bridgeUrl, {
  onMessage: (msg) => {
    state = reduce(state, msg);
    if (msg.type === "ACK" && msg.payload?.code === "NOT_CONTROLLER") teleop.disable();
    if (msg.type === "ACK" && typeof msg.payload?.text === "string") downloadRecord(msg.payload.text);
  },
  onStatus: (status) => {
    state = setConnection(state, status);
    if (status !== "connected") teleop.disable();
    else teleop.enable();
  },
});

const teleop = new TeleopLoop((throttle, steering) => {
  if (state.selectedVehicle) client.sendCommand(state.selectedVehicle, throttle, steering);
});
setInterval(() => teleop.tick(), SEND_PERIOD_MS);

window.addEventListener("keydown", (ev) => {
  if (teleop.keyDown(ev.code)) ev.preventDefault();
});
window.addEventListener("keyup", (ev) => {
  if (teleop.keyUp(ev.code)) ev.preventDefault();
});
// dead-man: losing focus stops the command stream within one period
window.addEventListener("blur", () => teleop.disable());
window.addEventListener("focus", () => teleop.enable());

document.getElementById("btn-mode")!.addEventListener("click", () => {
  const vid = state.selectedVehicle;
  if (!vid) return;
  const next = state.vehicleModes[vid] === "manual" ? "autonomous" : "manual";
  client.setMode(vid, next);
});
document.getElementById("btn-reset")!.addEventListener("click", () => client.reset());
document.getElementById("btn-rec-start")!.addEventListener("click", () => client.record("start"));
document.getElementById("btn-rec-stop")!.addEventListener("click", () => client.record("stop"));
document.getElementById("btn-rec-export")!.addEventListener("click", () => client.record("export"));

function downloadRecord(text: string): void {
  const blob = new Blob([text], { type: "text/csv" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "curbsim_record.csv";
  a.click();
  URL.revokeObjectURL(a.href);
}

function rebuildLightPanel(): void {
  lightPanel.innerHTML = "";
  for (const [eid, element] of Object.entries(state.elements)) {
    const row = document.createElement("div");
    if (element.kind === "traffic_light") {
      const button = document.createElement("button");
      button.textContent = `${eid}: ${element.state}`;
      button.style.borderLeft = `8px solid ${element.state === "green" ? "#3c5" : element.state === "yellow" ? "#dc3" : "#e33"}`;
      button.addEventListener("click", async () => {
        try {
          await cycleLight(scmUrl, eid, state.elements[eid].state);
          // confirmed state arrives via SCM_EVENT / frames
        } catch (err) {
          state = { ...state, toasts: [...state.toasts, String(err)] };
        }
      });
      row.appendChild(button);
    } else {
      row.textContent = `${eid} (${element.kind})`; // signs: display only
    }
    lightPanel.appendChild(row);
  }
}

let lastElementsKey = "";
function frame(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  renderScene(ctx, state, { width: canvas.width, height: canvas.height });
  hud.textContent = hudLines(state).join("\n");
  const elementsKey = JSON.stringify(Object.entries(state.elements).map(([k, e]) => [k, e.state]));
  if (elementsKey !== lastElementsKey) {
    lastElementsKey = elementsKey;
    rebuildLightPanel();
  }
  while (state.toasts.length > 0) {
    const note = document.createElement("div");
    note.className = "toast";
    note.textContent = state.toasts[0];
    toastBox.appendChild(note);
    setTimeout(() => note.remove(), 4000);
    state = { ...state, toasts: state.toasts.slice(1) };
  }
  requestAnimationFrame(frame);
}

client.connect();
requestAnimationFrame(frame);
