import type { Task } from "./api.js";
import { wordEditDistance } from "./diff.js";

export interface ReformulationHandlers {
  /** Called with the edited text when the annotator submits. */
  onSubmit: (text: string) => void;
  /** Called when the lease runs out; receives the unsaved draft. */
  onLeaseExpired: (draft: string) => void;
}

export interface ReformulationScreen {
  root: HTMLElement;
  textarea: HTMLTextAreaElement;
  submitButton: HTMLButtonElement;
  diffCounter: HTMLElement;
  warning: HTMLElement;
  dispose: () => void;
}

/** Editor screen: image, guidelines, the original caption, and an
 * editable copy with a live word-level diff counter.  Submitting the
 * caption unchanged is allowed; an emptied text box is not. */
export function renderReformulationScreen(
  container: HTMLElement,
  task: Task,
  guidelines: string,
  handlers: ReformulationHandlers,
  draft: string | null = null,
  now: () => number = Date.now,
): ReformulationScreen {
  const doc = container.ownerDocument;
  const root = doc.createElement("section");
  root.className = "screen reformulation";

  const image = doc.createElement("img");
  image.className = "task-image";
  image.src = task.image_uri;
  image.alt = `image ${task.task_id}`;
  root.appendChild(image);

  const guide = doc.createElement("pre");
  guide.className = "guidelines";
  guide.textContent = guidelines;
  root.appendChild(guide);

  const original = doc.createElement("p");
  original.className = "original-caption";
  original.textContent = task.payload.caption;
  root.appendChild(original);

  const textarea = doc.createElement("textarea");
  textarea.className = "editor";
  textarea.value = draft ?? task.payload.caption;
  root.appendChild(textarea);

  const diffCounter = doc.createElement("span");
  diffCounter.className = "diff-counter";
  root.appendChild(diffCounter);

  const warning = doc.createElement("p");
  warning.className = "warning";
  warning.hidden = true;
  root.appendChild(warning);

  const submitButton = doc.createElement("button");
  submitButton.className = "submit";
  submitButton.textContent = "Submit";
  root.appendChild(submitButton);

  const refresh = () => {
    const text = textarea.value;
    submitButton.disabled = text.trim().length === 0;
    const edits = wordEditDistance(task.payload.caption, text);
    diffCounter.textContent = `${edits} word${edits === 1 ? "" : "s"} changed`;
  };
  textarea.addEventListener("input", refresh);
  refresh();

  submitButton.addEventListener("click", () => {
    if (!submitButton.disabled) handlers.onSubmit(textarea.value.trim());
  });

  const remaining = Math.max(0, task.lease_expires * 1000 - now());
  const timer = setTimeout(() => {
    warning.hidden = false;
    warning.textContent =
      "Your hold on this task expired. Your text is preserved; requesting the task again.";
    submitButton.disabled = true;
    handlers.onLeaseExpired(textarea.value);
  }, remaining);

  container.replaceChildren(root);
  return {
    root,
    textarea,
    submitButton,
    diffCounter,
    warning,
    dispose: () => clearTimeout(timer),
  };
}
