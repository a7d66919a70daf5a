// Thin client for the service JSON API plus the polling loop.
// fetch and sleep are injectable so tests can run without a network.

import { JobDoc, TERMINAL_STATUSES } from "./model.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type SleepLike = (ms: number) => Promise<void>;

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

const realSleep: SleepLike = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

async function errorFrom(resp: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `request failed with ${resp.status}`;
  try {
    const body = await resp.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(resp.status, code, message);
}

export async function submitJob(
  baseUrl: string,
  files: File[],
  language: string,
  mode: string,
  fetchFn: FetchLike = fetch,
): Promise<string> {
  const form = new FormData();
  for (const file of files) {
    form.append("files", file, file.name);
  }
  form.append("language", language);
  form.append("mode", mode);
  const resp = await fetchFn(`${baseUrl}/api/jobs`, { method: "POST", body: form });
  if (resp.status !== 202) {
    throw await errorFrom(resp);
  }
  const body = await resp.json();
  return body.job_id as string;
}

export async function getJob(
  baseUrl: string,
  jobId: string,
  fetchFn: FetchLike = fetch,
): Promise<JobDoc> {
  const resp = await fetchFn(`${baseUrl}/api/jobs/${encodeURIComponent(jobId)}`);
  if (!resp.ok) {
    throw await errorFrom(resp);
  }
  return (await resp.json()) as JobDoc;
}

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  signal?: AbortSignal;
  fetchFn?: FetchLike;
  sleep?: SleepLike;
  onUpdate?: (job: JobDoc) => void;
}

// Poll until the job reaches a terminal status. Starts at intervalMs
// (1 s by default) and backs off gently so long jobs stop hammering the
// service. Cancelable through an AbortSignal.
export async function pollJob(
  baseUrl: string,
  jobId: string,
  options: PollOptions = {},
): Promise<JobDoc> {
  const {
    intervalMs = 1000,
    backoffFactor = 1.5,
    maxIntervalMs = 5000,
    signal,
    fetchFn = fetch,
    sleep = realSleep,
    onUpdate,
  } = options;
  let wait = intervalMs;
  for (;;) {
    if (signal?.aborted) {
      throw new DOMException("polling canceled", "AbortError");
    }
    const job = await getJob(baseUrl, jobId, fetchFn);
    onUpdate?.(job);
    if (TERMINAL_STATUSES.includes(job.status)) {
      return job;
    }
    await sleep(wait);
    wait = Math.min(wait * backoffFactor, maxIntervalMs);
  }
}
