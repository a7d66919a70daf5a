// DOM wiring: drag-and-drop upload area, slot list with per-file cross
// icons, Clear / Proceed buttons, and result previews under the drop zone.

import { pollJob, submitJob } from "./api.js";
import { MAX_SLOTS, Rejection, UploadModel } from "./model.js";

const model = new UploadModel();
const pickedFiles: File[] = []; // parallel to model.slots
let pollAbort: AbortController | null = null;

const $ = (id: string) => document.getElementById(id)!;

const dropzone = $("dropzone");
const fileInput = $("file-input") as HTMLInputElement;
const slotList = $("slot-list");
const clearBtn = $("clear-btn") as HTMLButtonElement;
const proceedBtn = $("proceed-btn") as HTMLButtonElement;
const statusLine = $("status-line");
const noticeLine = $("notice-line");
const previewList = $("preview-list");
const languageSelect = $("language") as HTMLSelectElement;
const modeSelect = $("mode") as HTMLSelectElement;

function describeRejection(r: Rejection): string {
  switch (r.reason) {
    case "too_many_files":
      return `${r.name}: at most ${MAX_SLOTS} images per cycle`;
    case "unsupported_format":
      return `${r.name}: only .png, .jpg and .jpeg are accepted`;
    case "empty_file":
      return `${r.name}: file is empty`;
    case "busy":
      return `${r.name}: a job is still running`;
  }
}

function renderSlots(): void {
  slotList.replaceChildren();
  model.slots.forEach((slot, index) => {
    const item = document.createElement("li");
    item.className = "slot";
    const label = document.createElement("span");
    label.textContent = `${slot.name} (${(slot.size / 1024).toFixed(1)} KiB)`;
    const cross = document.createElement("button");
    cross.className = "cross";
    cross.textContent = "✕";
    cross.title = `Remove ${slot.name}`;
    cross.addEventListener("click", () => {
      if (model.removeSlot(index)) {
        pickedFiles.splice(index, 1);
        render();
      }
    });
    item.append(label, cross);
    slotList.appendChild(item);
  });
}

function renderPreviews(): void {
  previewList.replaceChildren();
  for (const preview of model.previews) {
    const card = document.createElement("div");
    card.className = "preview";
    const title = document.createElement("h3");
    title.textContent = preview.name;
    card.appendChild(title);
    if (preview.error) {
      const err = document.createElement("p");
      err.className = "error";
      err.textContent = preview.error;
      card.appendChild(err);
    }
    if (preview.ocrText !== null) {
      const ocr = document.createElement("pre");
      ocr.textContent = preview.ocrText;
      card.appendChild(ocr);
    }
    if (preview.correctedText !== null) {
      const head = document.createElement("h4");
      head.textContent = "corrected";
      const fixed = document.createElement("pre");
      fixed.className = "corrected";
      fixed.textContent = preview.correctedText;
      card.append(head, fixed);
    }
    previewList.appendChild(card);
  }
}

function render(): void {
  renderSlots();
  renderPreviews();
  proceedBtn.disabled = !model.canProceed();
  clearBtn.disabled = model.busy || model.slots.length === 0;
  switch (model.phase) {
    case "idle":
      statusLine.textContent = model.slots.length
        ? `${model.slots.length} of ${MAX_SLOTS} images ready`
        : "";
      break;
    case "submitting":
      statusLine.textContent = "uploading…";
      break;
    case "polling":
      statusLine.textContent = `processing (${model.jobStatus ?? "queued"})…`;
      break;
    case "done":
      statusLine.textContent = `finished: ${model.jobStatus}`;
      break;
    case "error": {
      statusLine.textContent = "";
      showRetry(model.errorMessage ?? "something went wrong");
      return;
    }
  }
  noticeLine.replaceChildren();
}

function showNotices(rejections: Rejection[]): void {
  noticeLine.replaceChildren();
  for (const r of rejections) {
    const line = document.createElement("div");
    line.textContent = describeRejection(r);
    noticeLine.appendChild(line);
  }
}

function showRetry(message: string): void {
  noticeLine.replaceChildren();
  const line = document.createElement("div");
  line.textContent = message;
  const retry = document.createElement("button");
  retry.textContent = "Retry";
  retry.addEventListener("click", () => {
    if (model.jobId) {
      model.phase = "polling";
      render();
      startPolling(model.jobId);
    } else {
      model.phase = "idle";
      render();
      proceed();
    }
  });
  line.appendChild(retry);
  noticeLine.appendChild(line);
}

function addFiles(files: FileList | File[]): void {
  const incoming = Array.from(files);
  const before = model.slots.length;
  const result = model.addFiles(incoming);
  // keep the picked File objects aligned with the accepted slots
  let accepted = 0;
  for (const file of incoming) {
    if (accepted < result.added.length && model.slots[before + accepted]?.name === file.name) {
      pickedFiles.push(file);
      accepted += 1;
    }
  }
  render();
  showNotices(result.rejected);
}

function startPolling(jobId: string): void {
  pollAbort?.abort();
  pollAbort = new AbortController();
  pollJob("", jobId, {
    signal: pollAbort.signal,
    onUpdate: (job) => {
      model.applyJob(job);
      render();
    },
  })
    .then((job) => {
      model.applyJob(job);
      render();
    })
    .catch((err) => {
      if ((err as Error).name !== "AbortError") {
        model.pollFailed(String((err as Error).message ?? err));
        render();
      }
    });
}

function proceed(): void {
  if (!model.beginSubmit()) {
    return;
  }
  render();
  submitJob("", pickedFiles, languageSelect.value, modeSelect.value)
    .then((jobId) => {
      model.submitAccepted(jobId);
      render();
      startPolling(jobId);
    })
    .catch((err) => {
      model.submitFailed(String((err as Error).message ?? err));
      render();
    });
}

dropzone.addEventListener("click", () => fileInput.click());
dropzone.addEventListener("keydown", (e) => {
  if (e.key === "Enter" || e.key === " ") {
    e.preventDefault();
    fileInput.click();
  }
});
dropzone.addEventListener("dragover", (e) => {
  e.preventDefault();
  dropzone.classList.add("dragover");
});
dropzone.addEventListener("dragleave", () => dropzone.classList.remove("dragover"));
dropzone.addEventListener("drop", (e) => {
  e.preventDefault();
  dropzone.classList.remove("dragover");
  if (e.dataTransfer?.files) {
    addFiles(e.dataTransfer.files);
  }
});
fileInput.addEventListener("change", () => {
  if (fileInput.files) {
    addFiles(fileInput.files);
    fileInput.value = "";
  }
});
clearBtn.addEventListener("click", () => {
  if (model.clearAll()) {
    pickedFiles.length = 0;
    render();
  }
});
proceedBtn.addEventListener("click", proceed);

render();
