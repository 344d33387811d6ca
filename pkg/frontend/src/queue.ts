/** Offline judgment queue: FIFO, persisted, flushed one at a time.
 *
 * Exactly-once semantics: an entry leaves the queue only when the server
 * acknowledges it, and a duplicate rejection (409) counts as acknowledged
 * because it proves the judgment is already in the session log. Transport
 * failures leave the entry at the head for the next flush.
 */

import { ConflictError, JudgmentPayload, SessionApi } from "./api.js";

export interface QueueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface QueueEntry {
  sessionId: string;
  payload: JudgmentPayload;
}

export class JudgmentQueue {
  private flushing = false;

  constructor(
    private readonly api: SessionApi,
    private readonly storage: QueueStorage,
    private readonly key: string = "vocalkit.judgment-queue",
  ) {}

  private load(): QueueEntry[] {
    const raw = this.storage.getItem(this.key);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as QueueEntry[];
    } catch {
      return [];
    }
  }

  private save(entries: QueueEntry[]): void {
    this.storage.setItem(this.key, JSON.stringify(entries));
  }

  get length(): number {
    return this.load().length;
  }

  /** Queue a judgment; duplicate (session, evaluator, triplet) is a no-op. */
  enqueue(sessionId: string, payload: JudgmentPayload): void {
    const entries = this.load();
    const dup = entries.some(
      (e) =>
        e.sessionId === sessionId &&
        e.payload.evaluator_id === payload.evaluator_id &&
        e.payload.triplet_id === payload.triplet_id,
    );
    if (dup) return;
    entries.push({ sessionId, payload });
    this.save(entries);
  }

  /** Drain the queue head-first. Returns the number of entries settled
   * (accepted or already recorded). Stops at the first transport failure
   * so order is preserved. */
  async flush(): Promise<number> {
    if (this.flushing) return 0;
    this.flushing = true;
    let settled = 0;
    try {
      for (;;) {
        const entries = this.load();
        if (entries.length === 0) break;
        const head = entries[0];
        try {
          await this.api.submitJudgment(head.sessionId, head.payload);
        } catch (err) {
          if (!(err instanceof ConflictError)) {
            break; // still offline or server error: retry later
          }
          // conflict: already recorded server-side, safe to drop
        }
        settled += 1;
        this.save(this.load().slice(1));
      }
    } finally {
      this.flushing = false;
    }
    return settled;
  }
}
