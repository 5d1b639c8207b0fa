import { AnnotateApi, type Choice, type Task, type TaskKind } from "./api.js";
import { renderComparisonScreen } from "./comparison.js";
import { renderReformulationScreen } from "./reformulation.js";
import { SessionState } from "./state.js";

/** One annotator session per browser tab: log in, pull tasks one at a
 * time, submit, repeat until the pool is empty.  The server is the
 * source of truth; after an acknowledgment nothing is kept locally. */
export class App {
  readonly state = new SessionState();
  private activeScreen: { dispose: () => void } | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: AnnotateApi = new AnnotateApi(),
    private readonly now: () => number = Date.now,
  ) {}

  start(): void {
    const doc = this.root.ownerDocument;
    const form = doc.createElement("form");
    form.className = "login";
    const name = doc.createElement("input");
    name.placeholder = "annotator id";
    name.id = "annotator-id";
    const kind = doc.createElement("select");
    kind.id = "task-kind";
    for (const k of ["reformulation", "comparison"]) {
      const opt = doc.createElement("option");
      opt.value = k;
      opt.textContent = k;
      kind.appendChild(opt);
    }
    const go = doc.createElement("button");
    go.textContent = "Start";
    go.type = "submit";
    form.append(name, kind, go);
    form.addEventListener("submit", (e) => {
      e.preventDefault();
      if (!name.value.trim()) return;
      void this.begin(name.value.trim(), kind.value as TaskKind);
    });
    this.root.replaceChildren(form);
  }

  async begin(annotatorId: string, kind: TaskKind): Promise<void> {
    this.state.annotatorId = annotatorId;
    this.state.kind = kind;
    await this.nextTask();
  }

  async nextTask(): Promise<void> {
    this.stop();
    const task = await this.api.nextTask(this.state.annotatorId, this.state.kind);
    this.state.currentTask = task;
    if (task === null) {
      this.renderDone();
      return;
    }
    if (task.kind === "reformulation") {
      await this.renderReformulation(task);
    } else {
      this.renderComparison(task);
    }
  }

  /** Drop the current screen and its lease-expiry timer (navigation
   * away, tab teardown). */
  stop(): void {
    this.activeScreen?.dispose();
    this.activeScreen = null;
  }

  private async renderReformulation(task: Task): Promise<void> {
    const guidelines = await this.api.guidelines();
    const draft = this.state.draftText;
    this.state.draftText = null;
    this.activeScreen = renderReformulationScreen(
      this.root,
      task,
      guidelines,
      {
        onSubmit: (text) => void this.submitReformulation(task, text),
        onLeaseExpired: (unsaved) => {
          this.state.draftText = unsaved;
          void this.nextTask();
        },
      },
      draft,
      this.now,
    );
  }

  private renderComparison(task: Task): void {
    this.activeScreen = renderComparisonScreen(
      this.root,
      task,
      {
        onSubmit: (choices) => void this.submitComparison(task, choices),
        onLeaseExpired: () => void this.nextTask(),
      },
      this.now,
    );
  }

  private async submitReformulation(task: Task, text: string): Promise<void> {
    await this.api.submitReformulation(task, this.state.annotatorId, text);
    this.state.completed += 1;
    await this.nextTask();
  }

  private async submitComparison(task: Task, choices: Record<string, Choice>): Promise<void> {
    await this.api.submitComparison(task, this.state.annotatorId, choices);
    this.state.completed += 1;
    await this.nextTask();
  }

  private renderDone(): void {
    const doc = this.root.ownerDocument;
    const note = doc.createElement("p");
    note.className = "done";
    note.textContent = `No open tasks left. You completed ${this.state.completed} in this session.`;
    this.root.replaceChildren(note);
  }
}

declare global {
  interface Window {
    caprefApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(document.getElementById("app") as HTMLElement);
  window.caprefApp = app;
  app.start();
}
