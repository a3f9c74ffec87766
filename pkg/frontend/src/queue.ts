import { ApiError } from "./api.js";
import type { DraftEvent, PostEventsResult, WireEvent } from "./wire.js";

export type PostBatch = (events: WireEvent[]) => Promise<PostEventsResult>;

/**
 * Orders client events and posts them in batches.
 *
 * Drafts queue in the order they happened and are never reordered.
 * Sequence numbers are assigned only at post time, continuing from the
 * last committed seq, because the server interleaves its own events
 * (image_end and friends) into the same per-session sequence. At most
 * one batch is in flight; a seq conflict resynchronizes to the server's
 * expected position and retries the same drafts under new numbers.
 */
export class EventQueue {
  private pending: DraftEvent[] = [];
  private inFlight: Promise<void> | null = null;

  constructor(
    private readonly post: PostBatch,
    private committedThrough: number,
    private readonly onError: (error: unknown) => void = () => {},
  ) {}

  get committed(): number {
    return this.committedThrough;
  }

  get pendingCount(): number {
    return this.pending.length;
  }

  push(draft: DraftEvent): void {
    this.pending.push(draft);
  }

  /** The server committed events itself (session creation, advance). */
  noteServerCommit(committedThrough: number): void {
    if (committedThrough > this.committedThrough) {
      this.committedThrough = committedThrough;
    }
  }

  /**
   * Post everything queued so far. Safe to call at any time; concurrent
   * calls share the same in-flight work. Resolves once the queue has
   * drained or the failure has been reported.
   */
  flush(): Promise<void> {
    if (this.inFlight === null) {
      this.inFlight = this.drain().finally(() => {
        this.inFlight = null;
      });
    }
    return this.inFlight;
  }

  private async drain(): Promise<void> {
    while (this.pending.length > 0) {
      const batch = this.pending;
      this.pending = [];
      const ok = await this.postWithResync(batch);
      if (!ok) return;
    }
  }

  private async postWithResync(batch: DraftEvent[]): Promise<boolean> {
    for (let attempt = 0; attempt < 3; attempt++) {
      const events = batch.map((draft, i) => ({
        ...draft,
        seq: this.committedThrough + 1 + i,
      }));
      try {
        const result = await this.post(events);
        this.committedThrough = result.committed_through;
        return true;
      } catch (error) {
        if (
          error instanceof ApiError &&
          error.reason === "seq_conflict" &&
          typeof error.body.expected_next_seq === "number"
        ) {
          this.committedThrough = error.body.expected_next_seq - 1;
          continue;
        }
        // Refused outright (or network failure): put the batch back so
        // nothing is lost, but stop flushing and let the caller decide.
        this.pending = batch.concat(this.pending);
        this.onError(error);
        return false;
      }
    }
    this.pending = batch.concat(this.pending);
    this.onError(new Error("seq resynchronization did not converge"));
    return false;
  }
}
