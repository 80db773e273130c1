// DOM wiring for the capture-and-feedback console.

import { ScreeningClient, ServiceError } from "./api.js";
import { grabFrame, openCamera, readFileAsBlob, stopCamera, thumbnailDataUrl } from "./camera.js";
import { renderChecklist, renderResultPanel, renderRetryBanner, renderSummary } from "./render.js";
import { Session } from "./session.js";
import type { EyeFlag } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function init(): Promise<void> {
  const client = new ScreeningClient("");
  const session = new Session(0.8, window.localStorage);
  session.restore();

  // gauge threshold mirrors the service configuration
  try {
    const info = await client.modelInfo();
    session.confidenceThreshold = info.confidence_threshold;
    el("model-version").textContent = `model ${info.version}`;
  } catch {
    el("model-version").textContent = "service offline";
  }

  const video = el<HTMLVideoElement>("camera");
  const stream = await openCamera(video);
  if (!stream) {
    video.hidden = true;
    el("camera-fallback").hidden = false;
  }

  const update = () => {
    el("phase").textContent = session.phase;
    const last = session.lastAttempt;
    el("result").innerHTML = last
      ? renderResultPanel(last.result, session.confidenceThreshold)
      : "";
    el("banner").innerHTML = session.retryBanner ? renderRetryBanner() : "";
    el("checklist").innerHTML = session.showChecklist ? renderChecklist() : "";
    el("summary").innerHTML = renderSummary(session);
    el<HTMLButtonElement>("capture").disabled = session.inFlight || session.phase === "done";
    el<HTMLButtonElement>("retake").disabled = session.phase !== "reviewing";
    el<HTMLButtonElement>("accept").disabled = !session.history.length
      || session.phase === "done";
    el<HTMLButtonElement>("export").disabled = !session.history.length;
  };

  const submit = async (blob: Blob, thumbnail: string | null) => {
    const seq = session.beginAttempt();
    if (seq === null) return;
    update();
    try {
      const eye = el<HTMLSelectElement>("eye").value as EyeFlag;
      const result = await client.screen(blob, eye);
      session.completeAttempt(seq, result, thumbnail);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 400) {
        // undecodable upload: surface as a failed attempt, keep the session
        session.failAttempt(seq);
      } else {
        session.failAttempt(seq);
      }
    }
    update();
  };

  el("capture").addEventListener("click", async () => {
    if (!stream) return;
    const blob = await grabFrame(video);
    await submit(blob, thumbnailDataUrl(video));
  });

  el<HTMLInputElement>("file-input").addEventListener("change", async (event) => {
    const blob = readFileAsBlob(event.target as HTMLInputElement);
    if (blob) await submit(blob, null);
  });

  el("retake").addEventListener("click", () => {
    session.retake();
    update();
  });

  el("accept").addEventListener("click", () => {
    session.accept();
    update();
  });

  el("export").addEventListener("click", () => {
    const blob = new Blob([session.exportJson()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "screening-session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  el("reset").addEventListener("click", () => {
    session.reset();
    update();
  });

  window.addEventListener("beforeunload", () => stopCamera(stream));
  update();
}

init().catch((err) => {
  console.error("initialization failed:", err);
});
