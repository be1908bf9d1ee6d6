import type { Choice, Criterion, ServiceTask, TaskView } from "../src/types.js";
import { CRITERIA } from "../src/types.js";
import type { SessionView } from "../src/session.js";

export interface RecordedVote {
  taskId: string;
  annotatorId: string;
  choice: string;
}

export interface StubService {
  fetchFn: (input: string, init?: RequestInit) => Promise<Response>;
  votes: RecordedVote[];
  submitCalls: number;
  fetchCalls: number;
  /** Network-fail this many upcoming submit requests. */
  failNextSubmits: (count: number) => void;
  /** Respond 422 to submits while true. */
  setRejectChoices: (on: boolean) => void;
  /** Offer tasks in order even when the earliest one has no vote yet. */
  setOfferUnvotedInOrder: (on: boolean) => void;
  /** Mark a task as already voted by the annotator (server-side 409). */
  prevote: (taskId: string, annotatorId: string) => void;
}

export function makeTasks(promptCount: number): ServiceTask[] {
  const tasks: ServiceTask[] = [];
  for (let p = 0; p < promptCount; p += 1) {
    for (const criterion of CRITERIA) {
      tasks.push({
        task_id: `exp-${String(p).padStart(5, "0")}-${criterion}`,
        experiment_id: "exp",
        prompt_index: p,
        prompt: `prompt ${p}`,
        criterion,
        left_image_uri: `img/left-${p}.png`,
        right_image_uri: `img/right-${p}.png`,
      });
    }
  }
  return tasks;
}

export function makeStubService(tasks: ServiceTask[]): StubService {
  const votes: RecordedVote[] = [];
  const state = {
    failSubmits: 0,
    rejectChoices: false,
    offerCursor: false,
    cursor: 0,
    submitCalls: 0,
    fetchCalls: 0,
  };

  function hasVote(taskId: string, annotatorId: string): boolean {
    return votes.some((v) => v.taskId === taskId && v.annotatorId === annotatorId);
  }

  function nextTask(annotatorId: string): ServiceTask | null {
    if (state.offerCursor) {
      const task = tasks[state.cursor];
      if (task === undefined) {
        return null;
      }
      state.cursor += 1;
      return task;
    }
    return tasks.find((t) => !hasVote(t.task_id, annotatorId)) ?? null;
  }

  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://stub.test");
    if (url.pathname === "/tasks/next") {
      state.fetchCalls += 1;
      const annotator = url.searchParams.get("annotator");
      if (!annotator) {
        return json(400, { detail: "missing annotator id" });
      }
      const task = nextTask(annotator);
      return task === null ? new Response(null, { status: 204 }) : json(200, task);
    }
    if (url.pathname === "/annotations" && init?.method === "POST") {
      state.submitCalls += 1;
      if (state.failSubmits > 0) {
        state.failSubmits -= 1;
        throw new TypeError("fetch failed");
      }
      const body = JSON.parse(String(init.body)) as {
        task_id: string;
        annotator_id: string;
        choice: string;
      };
      if (state.rejectChoices || !["left", "right", "tie"].includes(body.choice)) {
        return json(422, { detail: "invalid choice" });
      }
      if (!tasks.some((t) => t.task_id === body.task_id)) {
        return json(404, { detail: "unknown task" });
      }
      if (hasVote(body.task_id, body.annotator_id)) {
        return json(409, { detail: "already voted" });
      }
      votes.push({
        taskId: body.task_id,
        annotatorId: body.annotator_id,
        choice: body.choice,
      });
      return json(201, { status: "recorded", task_id: body.task_id });
    }
    return json(404, { detail: `no route for ${url.pathname}` });
  };

  return {
    fetchFn,
    votes,
    get submitCalls() {
      return state.submitCalls;
    },
    get fetchCalls() {
      return state.fetchCalls;
    },
    failNextSubmits: (count) => {
      state.failSubmits = count;
    },
    setRejectChoices: (on) => {
      state.rejectChoices = on;
    },
    setOfferUnvotedInOrder: (on) => {
      state.offerCursor = on;
    },
    prevote: (taskId, annotatorId) => {
      votes.push({ taskId, annotatorId, choice: "left" });
    },
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** SessionView that records every call for assertions. */
export class RecordingView implements SessionView {
  tasksShown: TaskView[] = [];
  doneShown: number[] = [];
  errors: string[] = [];
  offlineBanners: number[] = [];

  showTask(task: TaskView): void {
    this.tasksShown.push(task);
  }

  showDone(progress: number): void {
    this.doneShown.push(progress);
  }

  showError(message: string): void {
    this.errors.push(message);
  }

  showOfflineBanner(queuedVotes: number): void {
    this.offlineBanners.push(queuedVotes);
  }

  clearNotices(): void {}
}

export const CHOICE_CYCLE: Choice[] = ["left", "right", "tie"];

export function criterionOf(taskId: string): Criterion {
  const name = taskId.split("-").pop() as Criterion;
  return name;
}
