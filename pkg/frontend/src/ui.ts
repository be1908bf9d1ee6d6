import { titleFor } from "./instructions.js";
import type { SessionView } from "./session.js";
import type { Choice, TaskView } from "./types.js";

const CHOICE_LABELS: Record<Choice, string> = {
  left: "Left is better (←)",
  tie: "Tie (=)",
  right: "Right is better (→)",
};

/** DOM implementation of the session's rendering surface. */
export class DomView implements SessionView {
  onChoice: (choice: Choice) => void = () => {};
  onRetry: () => void = () => {};

  constructor(private readonly root: HTMLElement) {}

  showTask(task: TaskView): void {
    this.root.innerHTML = "";
    this.root.append(
      this.notices(),
      el("section", { class: "criterion" }, [
        el("h2", { text: titleFor(task.criterion), "data-criterion": task.criterion }),
        el("p", { class: "instruction", text: task.instruction }),
      ]),
      el("p", { class: "prompt", text: `Prompt: ${task.prompt}` }),
      el("div", { class: "pair" }, [
        el("img", { class: "candidate", id: "left-image", src: task.leftImageUri, alt: "left image" }),
        el("img", { class: "candidate", id: "right-image", src: task.rightImageUri, alt: "right image" }),
      ]),
      el(
        "div",
        { class: "choices" },
        (["left", "tie", "right"] as Choice[]).map((choice) => {
          const button = el("button", {
            class: `choice choice-${choice}`,
            text: CHOICE_LABELS[choice],
          });
          button.addEventListener("click", () => this.onChoice(choice));
          return button;
        }),
      ),
    );
  }

  showDone(progress: number): void {
    this.root.innerHTML = "";
    this.root.append(
      this.notices(),
      el("section", { class: "done" }, [
        el("h2", { text: "All tasks complete" }),
        el("p", {
          class: "progress",
          text: `Votes submitted this session: ${progress}`,
        }),
      ]),
    );
  }

  showError(message: string): void {
    const box = this.noticeBox();
    box.innerHTML = "";
    box.append(el("div", { class: "error", role: "alert", text: message }));
  }

  showOfflineBanner(queuedVotes: number): void {
    const box = this.noticeBox();
    box.innerHTML = "";
    const banner = el("div", { class: "offline", role: "status" }, [
      el("span", {
        text: `Connection lost. ${queuedVotes} vote(s) queued locally.`,
      }),
    ]);
    const retry = el("button", { class: "retry", text: "Retry now" });
    retry.addEventListener("click", () => this.onRetry());
    banner.append(retry);
    box.append(banner);
  }

  clearNotices(): void {
    this.noticeBox().innerHTML = "";
  }

  private notices(): HTMLElement {
    return this.noticeBox();
  }

  private noticeBox(): HTMLElement {
    let box = this.root.querySelector<HTMLElement>("#notices");
    if (!box) {
      box = el("div", { id: "notices" });
      this.root.prepend(box);
    }
    return box;
  }
}

type Attrs = Record<string, string> & { text?: string };

function el(tag: string, attrs: Attrs = {} as Attrs, children: HTMLElement[] = []): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "text") {
      node.textContent = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

export function bindKeyboard(target: Pick<Document, "addEventListener">, onChoice: (c: Choice) => void): void {
  target.addEventListener("keydown", (event: Event) => {
    const key = (event as KeyboardEvent).key;
    if (key === "ArrowLeft") {
      onChoice("left");
    } else if (key === "ArrowRight") {
      onChoice("right");
    } else if (key === "=") {
      onChoice("tie");
    }
  });
}
