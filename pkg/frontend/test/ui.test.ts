// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { CRITERION_INSTRUCTIONS } from "../src/instructions.js";
import { MemoryStore, OfflineQueue } from "../src/queue.js";
import { AnnotatorSession } from "../src/session.js";
import { DomView, bindKeyboard } from "../src/ui.js";
import { makeStubService, makeTasks } from "./stub.js";

function mount() {
  document.body.innerHTML = '<main id="app"></main>';
  return document.getElementById("app") as HTMLElement;
}

function wireSession(stub = makeStubService(makeTasks(2))) {
  const root = mount();
  const view = new DomView(root);
  const session = new AnnotatorSession(
    new ServiceClient(stub.fetchFn),
    view,
    "ann1",
    new OfflineQueue(new MemoryStore()),
  );
  view.onChoice = (choice) => void session.choose(choice);
  view.onRetry = () => void session.reconnect();
  return { root, view, session, stub };
}

async function settle() {
  // A macrotask turn drains every pending promise chain from the stub.
  await new Promise((resolve) => setTimeout(resolve, 10));
}

describe("DOM rendering", () => {
  it("renders two equal images and three choice buttons", async () => {
    const { root, session } = wireSession();
    await session.start();
    const images = root.querySelectorAll("img.candidate");
    expect(images).toHaveLength(2);
    expect(images[0]!.getAttribute("src")).not.toBe(images[1]!.getAttribute("src"));
    const buttons = root.querySelectorAll("button.choice");
    expect(buttons).toHaveLength(3);
    const instruction = root.querySelector(".instruction")!.textContent;
    const criterion = root.querySelector("h2")!.getAttribute("data-criterion")!;
    expect(instruction).toBe(
      CRITERION_INSTRUCTIONS[criterion as keyof typeof CRITERION_INSTRUCTIONS],
    );
  });

  it("vote click POSTs and auto-fetches the next task", async () => {
    const { root, session, stub } = wireSession();
    await session.start();
    const firstPrompt = root.querySelector(".prompt")!.textContent;
    (root.querySelector("button.choice-left") as HTMLButtonElement).click();
    await settle();
    expect(stub.votes).toHaveLength(1);
    expect(stub.votes[0]!.choice).toBe("left");
    expect(root.querySelector(".prompt")).not.toBeNull();
    expect(session.current).not.toBeNull();
  });

  it("double click produces a single POST", async () => {
    const { root, session, stub } = wireSession();
    await session.start();
    const button = root.querySelector("button.choice-tie") as HTMLButtonElement;
    button.click();
    button.click();
    await settle();
    const firstTaskVotes = stub.votes.filter((v) => v.taskId === stub.votes[0]!.taskId);
    expect(firstTaskVotes).toHaveLength(1);
  });

  it("shows the completion screen with the progress count", async () => {
    const { root, session } = wireSession(makeStubService(makeTasks(1)));
    await session.start();
    for (let i = 0; i < 4; i += 1) {
      await session.choose("tie");
    }
    expect(root.querySelector(".done")).not.toBeNull();
    expect(root.querySelector(".progress")!.textContent).toContain("4");
  });

  it("keyboard shortcuts map to choices", async () => {
    const { session, stub } = wireSession();
    await session.start();
    bindKeyboard(document, (choice) => void session.choose(choice));
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowLeft" }));
    await settle();
    expect(stub.votes).toHaveLength(1);
    expect(stub.votes[0]!.choice).toBe("left");
  });

  it("offline banner appears with a retry control", async () => {
    const { root, session, stub } = wireSession(makeStubService(makeTasks(1)));
    await session.start();
    stub.failNextSubmits(1);
    await session.choose("left");
    const banner = root.querySelector("#notices .offline");
    expect(banner).not.toBeNull();
    expect(banner!.textContent).toContain("1 vote(s) queued");
    (root.querySelector("button.retry") as HTMLButtonElement).click();
    await settle();
    expect(stub.votes).toHaveLength(1);
  });
});
