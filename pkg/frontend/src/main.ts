/** Browser wiring: keyboard capture, parameter panel, playback, download. */

import { listModels } from "./api.js";
import { validateParam, type SamplerParams } from "./params.js";
import { UISession } from "./session.js";
import { schedulePlayback, type AudioContextLike } from "./synth.js";

const SERVER_URL = new URLSearchParams(window.location.search).get("server") ?? "http://127.0.0.1:8000";

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

const beatCount = element<HTMLSpanElement>("beat-count");
const beatList = element<HTMLSpanElement>("beat-list");
const warnings = element<HTMLDivElement>("warnings");
const errorBanner = element<HTMLDivElement>("error-banner");
const modelSelect = element<HTMLSelectElement>("model-select");
const generateButton = element<HTMLButtonElement>("generate");
const playButton = element<HTMLButtonElement>("play");
const downloadLink = element<HTMLAnchorElement>("download");
const clearButton = element<HTMLButtonElement>("clear");
const resultLine = element<HTMLDivElement>("result");

const session = new UISession({
  baseUrl: SERVER_URL,
  warn: (message) => {
    warnings.textContent = message;
    window.setTimeout(() => {
      if (warnings.textContent === message) warnings.textContent = "";
    }, 4000);
  },
});

let audio: AudioContext | null = null;
let keyHeld = false;

function isTapKey(event: KeyboardEvent): boolean {
  if (event.target instanceof HTMLInputElement || event.target instanceof HTMLSelectElement) {
    return false;
  }
  if (event.metaKey || event.ctrlKey || event.altKey) {
    return false;
  }
  return event.code === "Space" || event.key.length === 1;
}

function render(): void {
  const beats = session.beats();
  beatCount.textContent = String(beats.length);
  beatList.textContent = beats
    .map(([rest, duration]) => `(${rest.toFixed(2)}, ${duration.toFixed(2)})`)
    .join(" ");
  generateButton.disabled = !session.canGenerate() || session.status === "generating";
  playButton.disabled = session.lastResponse === null;
  downloadLink.style.visibility = session.lastResponse === null ? "hidden" : "visible";
  errorBanner.textContent = session.error ?? "";
  errorBanner.style.display = session.error ? "block" : "none";
  if (session.lastResponse) {
    resultLine.textContent = `pitches: ${session.lastResponse.pitches.join(" ")}`;
  } else if (session.status === "generating") {
    resultLine.textContent = "generating…";
  }
}

document.addEventListener("keydown", (event) => {
  if (!isTapKey(event) || event.repeat || keyHeld) {
    return;
  }
  if (event.code === "Space") {
    event.preventDefault();
  }
  keyHeld = true;
  session.recorder.down(performance.now());
  render();
});

document.addEventListener("keyup", (event) => {
  if (!keyHeld || (event.target instanceof HTMLInputElement)) {
    return;
  }
  keyHeld = false;
  session.recorder.up(performance.now());
  render();
});

clearButton.addEventListener("click", () => {
  session.clearTaps();
  resultLine.textContent = "";
  render();
});

for (const input of document.querySelectorAll<HTMLInputElement>("input[data-param]")) {
  const name = input.dataset["param"] as keyof SamplerParams;
  input.value = String(session.params[name]);
  const hint = input.nextElementSibling as HTMLElement | null;
  input.addEventListener("change", () => {
    const value = Number(input.value);
    const problem = validateParam(name, value);
    if (problem) {
      if (hint) hint.textContent = problem;
      input.classList.add("invalid");
      return;
    }
    if (hint) hint.textContent = "";
    input.classList.remove("invalid");
    session.setParam(name, value);
  });
}

modelSelect.addEventListener("change", () => {
  session.model = modelSelect.value || null;
  render();
});

generateButton.addEventListener("click", () => {
  void session.generate().then((response) => {
    if (response) {
      const bytes = Uint8Array.from(atob(response.midi_base64), (c) => c.charCodeAt(0));
      const blob = new Blob([bytes], { type: "audio/midi" });
      downloadLink.href = URL.createObjectURL(blob);
      downloadLink.download = "melody.mid";
    }
    render();
  });
  render();
});

playButton.addEventListener("click", () => {
  const response = session.lastResponse;
  const request = session.lastRequest;
  if (!response || !request) {
    return;
  }
  audio = audio ?? new AudioContext();
  void audio.resume();
  schedulePlayback(audio as unknown as AudioContextLike, response.pitches, request.beats);
});

void (async () => {
  try {
    const models = await listModels(SERVER_URL);
    modelSelect.innerHTML = "";
    for (const model of models) {
      const option = document.createElement("option");
      option.value = model.name;
      option.textContent = `${model.name} (val acc ${model.val_accuracy.toFixed(3)})`;
      modelSelect.appendChild(option);
    }
    if (models.length > 0) {
      session.model = models[0]!.name;
      modelSelect.value = models[0]!.name;
    }
  } catch (failure) {
    errorBanner.textContent = `cannot reach server at ${SERVER_URL}: ${String(failure)}`;
    errorBanner.style.display = "block";
  }
  render();
})();
