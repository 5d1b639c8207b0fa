import type { Task, TaskKind } from "./api.js";

/** Per-tab annotator session: who is annotating, what they hold a lease
 * on, and how far along they are. */
export class SessionState {
  annotatorId = "";
  kind: TaskKind = "reformulation";
  currentTask: Task | null = null;
  completed = 0;
  /** Draft text preserved across a lease expiry so nothing is lost. */
  draftText: string | null = null;

  leaseMillisLeft(now: number = Date.now()): number {
    if (!this.currentTask) return 0;
    return Math.max(0, this.currentTask.lease_expires * 1000 - now);
  }

  leaseExpired(now: number = Date.now()): boolean {
    return this.currentTask !== null && this.leaseMillisLeft(now) === 0;
  }
}
