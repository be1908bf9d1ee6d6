import { instructionFor } from "./instructions.js";
import type { PendingVote, ServiceTask, TaskView } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

/** Transport-level failure (offline, DNS, aborted); always retryable. */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

export type SubmitOutcome = "recorded" | "duplicate";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly baseUrl = "",
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    try {
      return await this.fetchFn(this.baseUrl + path, init);
    } catch (error) {
      throw new NetworkError(String(error));
    }
  }

  /** Next unvoted task for this annotator, or null when none remain. */
  async fetchNextTask(annotatorId: string): Promise<TaskView | null> {
    const response = await this.request(
      `/tasks/next?annotator=${encodeURIComponent(annotatorId)}`,
    );
    if (response.status === 204) {
      return null;
    }
    if (response.status !== 200) {
      throw new ApiError(response.status, await safeDetail(response));
    }
    const task = (await response.json()) as ServiceTask;
    return {
      taskId: task.task_id,
      experimentId: task.experiment_id,
      promptIndex: task.prompt_index,
      prompt: task.prompt,
      criterion: task.criterion,
      leftImageUri: task.left_image_uri,
      rightImageUri: task.right_image_uri,
      instruction: instructionFor(task.criterion),
    };
  }

  /**
   * Submit one vote. A 409 (already voted) reports "duplicate" rather than
   * throwing: the server has the vote, so the session should advance.
   */
  async submitVote(annotatorId: string, vote: PendingVote): Promise<SubmitOutcome> {
    const response = await this.request("/annotations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        task_id: vote.taskId,
        annotator_id: annotatorId,
        choice: vote.choice,
      }),
    });
    if (response.status === 201) {
      return "recorded";
    }
    if (response.status === 409) {
      return "duplicate";
    }
    throw new ApiError(response.status, await safeDetail(response));
  }
}

async function safeDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) {
      return String(body.detail);
    }
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}
