import { ApiError, NetworkError, ServiceClient } from "./api.js";
import { OfflineQueue } from "./queue.js";
import type { Choice, TaskView } from "./types.js";

/** Everything the session needs from the rendering layer. */
export interface SessionView {
  showTask(task: TaskView): void;
  showDone(progress: number): void;
  showError(message: string): void;
  showOfflineBanner(queuedVotes: number): void;
  clearNotices(): void;
}

/**
 * One annotator's pass over the task queue.
 *
 * State between tasks is limited to the offline vote queue and a progress
 * counter; everything else comes from the service. Exactly one submission
 * can be in flight, so rapid repeated clicks produce a single POST, and a
 * 409 from the service (vote already recorded) advances like a success.
 */
export class AnnotatorSession {
  private currentTask: TaskView | null = null;
  private inFlight = false;
  private delivered = 0;

  constructor(
    private readonly client: ServiceClient,
    private readonly view: SessionView,
    private readonly annotatorId: string,
    readonly queue: OfflineQueue = new OfflineQueue(),
  ) {}

  get current(): TaskView | null {
    return this.currentTask;
  }

  get progress(): number {
    return this.delivered;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async start(): Promise<void> {
    await this.advance();
  }

  /** Vote on the displayed task. Ignored while another vote is in flight. */
  async choose(choice: Choice): Promise<void> {
    if (this.currentTask === null || this.inFlight) {
      return;
    }
    const vote = { taskId: this.currentTask.taskId, choice };
    this.inFlight = true;
    try {
      await this.client.submitVote(this.annotatorId, vote);
      // "recorded" and "duplicate" both mean the server has this vote.
      this.delivered += 1;
      this.currentTask = null;
      this.inFlight = false;
      await this.advance();
    } catch (error) {
      this.inFlight = false;
      if (error instanceof NetworkError) {
        // The choice is made; park it for redelivery and keep going (the
        // task fetch path may still be up when only submits are failing).
        this.queue.enqueue(vote);
        this.currentTask = null;
        this.view.showOfflineBanner(this.queue.size);
        await this.advance();
      } else if (error instanceof ApiError) {
        // e.g. 422 invalid choice: keep the task so the annotator can retry.
        this.view.showError(error.message);
      } else {
        throw error;
      }
    }
  }

  /**
   * Flush queued votes (FIFO) and resume fetching tasks. Wire this to the
   * browser's online event and/or a retry timer.
   */
  async reconnect(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      const flushed = await this.queue.flush((vote) =>
        this.client.submitVote(this.annotatorId, vote),
      );
      this.delivered += flushed;
    } finally {
      this.inFlight = false;
    }
    if (this.queue.size > 0) {
      this.view.showOfflineBanner(this.queue.size);
      return;
    }
    if (this.currentTask === null) {
      await this.advance();
    }
  }

  private async advance(): Promise<void> {
    try {
      const task = await this.client.fetchNextTask(this.annotatorId);
      this.view.clearNotices();
      const pending = new Set(this.queue.snapshot().map((vote) => vote.taskId));
      if (task !== null && !pending.has(task.taskId)) {
        this.currentTask = task;
        this.view.showTask(task);
      } else {
        // Nothing to show: either the queue is exhausted, or the server
        // re-offered a task whose vote is still queued (it does not know
        // about it yet). Never render a task twice for one choice.
        this.currentTask = null;
        if (task === null) {
          this.view.showDone(this.delivered);
        }
      }
      if (this.queue.size > 0) {
        this.view.showOfflineBanner(this.queue.size);
      }
    } catch (error) {
      if (error instanceof NetworkError) {
        this.view.showOfflineBanner(this.queue.size);
      } else if (error instanceof ApiError) {
        this.view.showError(error.message);
      } else {
        throw error;
      }
    }
  }
}
