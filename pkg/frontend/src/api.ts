/** Typed client for the annotation service REST API. */

export type TaskKind = "reformulation" | "comparison";

export interface ReformulationPayload {
  caption: string;
  language: string;
}

export interface ComparisonPayload {
  caption_a: string;
  caption_b: string;
  axes: string[];
  /** Server-issued blinding: when true, caption B is shown on the left. */
  swap: boolean;
}

export interface Task {
  task_id: string;
  kind: TaskKind;
  batch_id: string;
  image_uri: string;
  payload: ReformulationPayload & ComparisonPayload;
  lease_token: string;
  /** Unix seconds when the lease expires. */
  lease_expires: number;
}

export interface SubmissionAck {
  submission_id: string;
  duplicate: boolean;
}

export interface StatusCounts {
  open: number;
  assigned: number;
  done: number;
}

export type Choice = "left" | "right" | "tie";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function parseError(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    const doc = await resp.json();
    if (doc && typeof doc.detail === "string") detail = doc.detail;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(resp.status, detail);
}

export class AnnotateApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async nextTask(annotator: string, kind: TaskKind): Promise<Task | null> {
    const params = new URLSearchParams({ annotator, kind });
    const resp = await fetch(this.url(`/api/tasks/next?${params}`));
    if (resp.status === 204) return null;
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as Task;
  }

  async submitReformulation(
    task: Task,
    annotator: string,
    reformulated: string,
  ): Promise<SubmissionAck> {
    return this.submit({
      task_id: task.task_id,
      annotator_id: annotator,
      lease_token: task.lease_token,
      reformulated,
    });
  }

  async submitComparison(
    task: Task,
    annotator: string,
    choices: Record<string, Choice>,
  ): Promise<SubmissionAck> {
    return this.submit({
      task_id: task.task_id,
      annotator_id: annotator,
      lease_token: task.lease_token,
      choices,
    });
  }

  private async submit(body: unknown): Promise<SubmissionAck> {
    const resp = await fetch(this.url("/api/submissions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as SubmissionAck;
  }

  async guidelines(): Promise<string> {
    const resp = await fetch(this.url("/api/guidelines"));
    if (!resp.ok) await parseError(resp);
    return resp.text();
  }

  async status(): Promise<StatusCounts> {
    const resp = await fetch(this.url("/api/status"));
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as StatusCounts;
  }
}
