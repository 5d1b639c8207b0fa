import type { Choice, Task } from "./api.js";

export interface ComparisonHandlers {
  /** Raw screen choices keyed by axis; the server de-randomizes. */
  onSubmit: (choices: Record<string, Choice>) => void;
  /** Called when the lease runs out. */
  onLeaseExpired?: () => void;
}

export interface ComparisonScreen {
  root: HTMLElement;
  submitButton: HTMLButtonElement;
  warning: HTMLElement;
  /** Pick one side for an axis, as a click on its radio button would. */
  choose: (axis: string, choice: Choice) => void;
  leftCaption: string;
  rightCaption: string;
  dispose: () => void;
}

const CHOICES: Choice[] = ["left", "tie", "right"];

/** Pairwise judgment screen.  The A/B order is blinded with the
 * server-issued swap recorded on the task, so exports can be
 * de-randomized; submission stays disabled until every axis has a
 * choice. */
export function renderComparisonScreen(
  container: HTMLElement,
  task: Task,
  handlers: ComparisonHandlers,
  now: () => number = Date.now,
): ComparisonScreen {
  const doc = container.ownerDocument;
  const root = doc.createElement("section");
  root.className = "screen comparison";

  const image = doc.createElement("img");
  image.className = "task-image";
  image.src = task.image_uri;
  image.alt = `image ${task.task_id}`;
  root.appendChild(image);

  const leftCaption = task.payload.swap ? task.payload.caption_b : task.payload.caption_a;
  const rightCaption = task.payload.swap ? task.payload.caption_a : task.payload.caption_b;
  const captions = doc.createElement("div");
  captions.className = "caption-pair";
  for (const [side, text] of [["left", leftCaption], ["right", rightCaption]] as const) {
    const card = doc.createElement("blockquote");
    card.className = `caption ${side}`;
    card.textContent = text;
    captions.appendChild(card);
  }
  root.appendChild(captions);

  const selected = new Map<string, Choice>();
  let expired = false;
  const submitButton = doc.createElement("button");
  submitButton.className = "submit";
  submitButton.textContent = "Submit";
  submitButton.disabled = true;

  const inputs = new Map<string, HTMLInputElement>();
  const table = doc.createElement("table");
  table.className = "axes";
  for (const axis of task.payload.axes) {
    const row = doc.createElement("tr");
    const label = doc.createElement("th");
    label.textContent = axis;
    row.appendChild(label);
    for (const choice of CHOICES) {
      const cell = doc.createElement("td");
      const input = doc.createElement("input");
      input.type = "radio";
      input.name = `axis-${axis}`;
      input.value = choice;
      input.addEventListener("change", () => {
        selected.set(axis, choice);
        submitButton.disabled = expired || selected.size !== task.payload.axes.length;
      });
      inputs.set(`${axis}:${choice}`, input);
      cell.appendChild(input);
      cell.appendChild(doc.createTextNode(choice));
      row.appendChild(cell);
    }
    table.appendChild(row);
  }
  root.appendChild(table);

  const warning = doc.createElement("p");
  warning.className = "warning";
  warning.hidden = true;
  root.appendChild(warning);
  root.appendChild(submitButton);

  submitButton.addEventListener("click", () => {
    if (!submitButton.disabled && !expired) {
      handlers.onSubmit(Object.fromEntries(selected) as Record<string, Choice>);
    }
  });

  const remaining = Math.max(0, task.lease_expires * 1000 - now());
  const timer = setTimeout(() => {
    expired = true;
    submitButton.disabled = true;
    warning.hidden = false;
    warning.textContent = "Your hold on this task expired; requesting it again.";
    handlers.onLeaseExpired?.();
  }, remaining);

  container.replaceChildren(root);
  return {
    root,
    submitButton,
    warning,
    leftCaption,
    rightCaption,
    dispose: () => clearTimeout(timer),
    choose: (axis, choice) => {
      const input = inputs.get(`${axis}:${choice}`);
      if (!input) throw new Error(`no such option ${axis}:${choice}`);
      input.checked = true;
      input.dispatchEvent(new doc.defaultView!.Event("change"));
    },
  };
}
