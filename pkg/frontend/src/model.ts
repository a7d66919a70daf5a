// Client-side upload model: slot list plus the submit/poll state machine.
// Pure data, no DOM, no network - the UI and the API layer drive it.

export const MAX_SLOTS = 5;
export const ACCEPTED_EXTENSIONS = [".png", ".jpg", ".jpeg"];

export interface FileLike {
  name: string;
  size: number;
}

export interface Slot {
  name: string;
  size: number;
}

export type RejectionReason = "too_many_files" | "unsupported_format" | "empty_file" | "busy";

export interface Rejection {
  name: string;
  reason: RejectionReason;
}

export interface AddResult {
  added: Slot[];
  rejected: Rejection[];
}

export type Phase = "idle" | "submitting" | "polling" | "done" | "error";

export interface Preview {
  name: string;
  ocrText: string | null;
  correctedText: string | null;
  error: string | null;
}

export interface JobResult {
  name: string;
  ocr_text: string | null;
  corrected_text: string | null;
  error: { code: string; message: string } | null;
}

export interface JobDoc {
  job_id: string;
  status: string;
  results: JobResult[];
}

export const TERMINAL_STATUSES = ["done", "partial", "failed"];

export function hasAcceptedExtension(name: string): boolean {
  const lower = name.toLowerCase();
  return ACCEPTED_EXTENSIONS.some((ext) => lower.endsWith(ext));
}

export class UploadModel {
  slots: Slot[] = [];
  phase: Phase = "idle";
  jobId: string | null = null;
  jobStatus: string | null = null;
  previews: Preview[] = [];
  errorMessage: string | null = null;

  get busy(): boolean {
    return this.phase === "submitting" || this.phase === "polling";
  }

  addFiles(files: FileLike[]): AddResult {
    const added: Slot[] = [];
    const rejected: Rejection[] = [];
    for (const file of files) {
      if (this.busy) {
        rejected.push({ name: file.name, reason: "busy" });
        continue;
      }
      if (!hasAcceptedExtension(file.name)) {
        rejected.push({ name: file.name, reason: "unsupported_format" });
        continue;
      }
      if (file.size <= 0) {
        rejected.push({ name: file.name, reason: "empty_file" });
        continue;
      }
      if (this.slots.length >= MAX_SLOTS) {
        rejected.push({ name: file.name, reason: "too_many_files" });
        continue;
      }
      const slot = { name: file.name, size: file.size };
      this.slots.push(slot);
      added.push(slot);
    }
    return { added, rejected };
  }

  removeSlot(index: number): boolean {
    if (this.busy || index < 0 || index >= this.slots.length) {
      return false;
    }
    this.slots.splice(index, 1);
    return true;
  }

  clearAll(): boolean {
    if (this.busy) {
      return false;
    }
    this.slots = [];
    return true;
  }

  canProceed(): boolean {
    return this.slots.length >= 1 && !this.busy;
  }

  beginSubmit(): boolean {
    if (!this.canProceed()) {
      return false;
    }
    this.phase = "submitting";
    this.jobId = null;
    this.jobStatus = null;
    this.previews = [];
    this.errorMessage = null;
    return true;
  }

  submitAccepted(jobId: string): void {
    this.jobId = jobId;
    this.phase = "polling";
  }

  submitFailed(message: string): void {
    this.errorMessage = message;
    this.phase = "error";
  }

  // Fold a polled job document into the model. Previews keep upload order
  // because the server preserves result order.
  applyJob(job: JobDoc): void {
    this.jobId = job.job_id;
    this.jobStatus = job.status;
    this.previews = (job.results ?? []).map((r) => ({
      name: r.name,
      ocrText: r.ocr_text,
      correctedText: r.corrected_text,
      error: r.error ? `${r.error.code}: ${r.error.message}` : null,
    }));
    if (job.status === "failed") {
      this.errorMessage = "processing failed for every image";
      this.phase = "error";
    } else if (TERMINAL_STATUSES.includes(job.status)) {
      this.phase = "done";
    } else {
      this.phase = "polling";
    }
  }

  pollFailed(message: string): void {
    this.errorMessage = message;
    this.phase = "error";
  }
}
