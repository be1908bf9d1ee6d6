import { NetworkError, type SubmitOutcome } from "./api.js";
import type { PendingVote } from "./types.js";

/** Persistence hook for the offline queue; window.localStorage satisfies it. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class MemoryStore implements KeyValueStore {
  private data = new Map<string, string>();

  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
}

const STORAGE_KEY = "pixsift.offline-votes";

/**
 * FIFO queue of votes that could not reach the service. Flushing preserves
 * order and stops at the first transport failure; no vote is ever dropped.
 */
export class OfflineQueue {
  private votes: PendingVote[];

  constructor(private readonly store: KeyValueStore = new MemoryStore()) {
    const raw = store.getItem(STORAGE_KEY);
    this.votes = raw ? (JSON.parse(raw) as PendingVote[]) : [];
  }

  get size(): number {
    return this.votes.length;
  }

  snapshot(): readonly PendingVote[] {
    return [...this.votes];
  }

  enqueue(vote: PendingVote): void {
    this.votes.push(vote);
    this.persist();
  }

  /**
   * Deliver queued votes in order. Returns how many were accepted
   * (duplicates count: the server already has them). A NetworkError stops
   * the flush with the remaining votes intact; any other error also stops
   * so a human can look at the queue.
   */
  async flush(
    submit: (vote: PendingVote) => Promise<SubmitOutcome>,
  ): Promise<number> {
    let delivered = 0;
    for (let head = this.votes[0]; head !== undefined; head = this.votes[0]) {
      try {
        await submit(head);
      } catch (error) {
        if (error instanceof NetworkError) {
          break;
        }
        throw error;
      }
      this.votes.shift();
      this.persist();
      delivered += 1;
    }
    return delivered;
  }

  private persist(): void {
    this.store.setItem(STORAGE_KEY, JSON.stringify(this.votes));
  }
}
