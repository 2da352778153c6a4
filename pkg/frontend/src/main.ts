// Console bootstrap: fetch scenario metadata, open the WebSocket, wire
// pointer/wheel/key input into the latest-wins sender, and run the render
// loop. The control loop lives server-side; this page is stateless beyond
// its own view and can be reloaded at any time.

import { drawScene } from "./console.js";
import { feedbackVisual, isStale } from "./feedback.js";
import { parseBridgeMessage, type ScenarioMeta } from "./protocol.js";
import { InputSender, initialState, orientationFromAngles } from "./store.js";
import { defaultMapping, pointerToLeaderPose, type PointerSample } from "./view.js";

const SEND_HZ = 60;

function bridgeUrl(path: string): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}${path}`;
}

async function start(): Promise<void> {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const state = initialState();
  const sender = new InputSender();

  const metaResp = await fetch("/scenario");
  const meta = (await metaResp.json()) as ScenarioMeta;
  state.meta = meta;

  const map = defaultMapping(
    canvas.width,
    canvas.height,
    meta.leader_origin,
    meta.leader_workspace_radius,
  );

  let pointer: PointerSample | null = null;
  let depth = 0;
  let yaw = 0;
  let pitch = 0;
  let dragging = false;
  let cursorWorkspace: { x: number; y: number } | null = null;

  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
    onPointer(ev);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragging) {
      onPointer(ev);
    }
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    depth -= ev.deltaY * 0.0002; // wheel = depth (z) control
    if (pointer) {
      pointer = { ...pointer, depth };
      pushInput();
    }
  });
  window.addEventListener("keydown", (ev) => {
    // orientation source stand-in: arrows adjust wrist yaw/pitch
    const step = 0.05;
    if (ev.key === "ArrowLeft") yaw += step;
    else if (ev.key === "ArrowRight") yaw -= step;
    else if (ev.key === "ArrowUp") pitch += step;
    else if (ev.key === "ArrowDown") pitch -= step;
    else return;
    ev.preventDefault();
    pushInput();
  });

  function onPointer(ev: PointerEvent): void {
    const rect = canvas.getBoundingClientRect();
    pointer = {
      px: ((ev.clientX - rect.left) / rect.width) * canvas.width,
      py: ((ev.clientY - rect.top) / rect.height) * canvas.height,
      depth,
    };
    pushInput();
  }

  function pushInput(): void {
    if (!pointer) {
      return;
    }
    const mapped = pointerToLeaderPose(pointer, map);
    state.inputClamped = mapped.clamped;
    cursorWorkspace = { x: mapped.position.x, y: mapped.position.y };
    sender.update(mapped.position, orientationFromAngles(yaw, pitch));
  }

  const ws = new WebSocket(bridgeUrl("/ws"));
  ws.binaryType = "arraybuffer";
  ws.onopen = () => {
    state.status = "connected";
  };
  ws.onclose = () => {
    state.status = "closed";
  };
  ws.onmessage = (ev) => {
    const msg = parseBridgeMessage(ev.data as string);
    if (msg.type === "trace") {
      state.latest = msg.record;
      state.lastRecordAtMs = performance.now();
    } else if (msg.type === "error") {
      state.error = msg.message;
    }
  };

  setInterval(() => {
    const frame = sender.flush(performance.now());
    if (frame && ws.readyState === WebSocket.OPEN) {
      ws.send(frame);
    }
  }, 1000 / SEND_HZ);

  function render(): void {
    const visual =
      state.latest && state.meta
        ? feedbackVisual(state.latest, state.meta.factor_clamp)
        : null;
    drawScene(ctx, map, {
      record: state.latest,
      visual,
      cursor: cursorWorkspace,
      stale: isStale(state.lastRecordAtMs, performance.now()),
      inputClamped: state.inputClamped,
      meta: state.meta,
    });
    requestAnimationFrame(render);
  }
  requestAnimationFrame(render);
}

start().catch((err) => {
  document.body.innerHTML = `<pre style="color:#e06c5c">console failed to start: ${err}</pre>`;
});
