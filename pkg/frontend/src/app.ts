/** Session driver: fetch next triplet, enforce listen gating, submit
 * (queueing offline), advance. Reloading mid-session resumes at the first
 * unjudged triplet because /next is idempotent per evaluator. */

import { ApiError, ConflictError, NextResponse, SessionApi } from "./api.js";
import { PlayGate } from "./gating.js";
import { JudgmentQueue } from "./queue.js";
import {
  perceivedOrder,
  renderComplete,
  renderInstructions,
  renderProgress,
  renderRetryBanner,
  renderTriplet,
} from "./view.js";

const RETRY_DELAY_MS = 3000;

export interface AppConfig {
  sessionId: string;
  evaluatorId: string;
  api: SessionApi;
  queue: JudgmentQueue;
  container: HTMLElement;
}

export class JudgingApp {
  private submitting = false;

  constructor(private readonly cfg: AppConfig) {}

  async start(): Promise<void> {
    // reconnect path: settle anything queued before asking for more work
    await this.cfg.queue.flush();
    await this.showNext();
  }

  private clear(): void {
    this.cfg.container.replaceChildren();
  }

  private async showNext(): Promise<void> {
    const doc = this.cfg.container.ownerDocument;
    let next: NextResponse;
    try {
      next = await this.cfg.api.fetchNext(this.cfg.sessionId, this.cfg.evaluatorId);
    } catch (err) {
      this.clear();
      this.cfg.container.appendChild(
        renderRetryBanner(doc, "Cannot reach the session service; retrying..."),
      );
      setTimeout(() => void this.showNext(), RETRY_DELAY_MS);
      return;
    }

    this.clear();
    if (next.done) {
      const score = await this.cfg.api.fetchScore(this.cfg.sessionId);
      this.cfg.container.appendChild(renderComplete(doc, score));
      return;
    }

    this.cfg.container.appendChild(renderInstructions(doc));
    const screen = renderTriplet(doc, next, (t) => this.cfg.api.audioUrl(t));
    this.cfg.container.appendChild(screen.root);

    const positions = next.items.map((i) => i.position);
    const gate = new PlayGate(positions);
    for (const [position, audio] of screen.players) {
      audio.addEventListener("timeupdate", () => {
        gate.update(position, audio.currentTime);
        if (gate.allSatisfied()) {
          screen.submitConsistent.disabled = false;
          screen.submitInconsistent.disabled = false;
          screen.status.textContent = "Ready to submit.";
        }
      });
    }

    const submit = (consistent: boolean) => {
      if (this.submitting || !gate.allSatisfied()) return;
      void this.submit(next.triplet_id, consistent, perceivedOrder(screen.rankSelects));
    };
    screen.submitConsistent.addEventListener("click", () => submit(true));
    screen.submitInconsistent.addEventListener("click", () => submit(false));

    try {
      const score = await this.cfg.api.fetchScore(this.cfg.sessionId);
      this.cfg.container.appendChild(renderProgress(doc, score, next.total));
    } catch {
      // progress footer is cosmetic; the triplet is still judgeable
    }
  }

  private async submit(
    tripletId: string,
    consistent: boolean,
    order: string[] | undefined,
  ): Promise<void> {
    this.submitting = true;
    const payload = {
      evaluator_id: this.cfg.evaluatorId,
      triplet_id: tripletId,
      consistent,
      ...(order ? { perceived_order: order } : {}),
    };
    try {
      await this.cfg.api.submitJudgment(this.cfg.sessionId, payload);
    } catch (err) {
      if (err instanceof ConflictError) {
        // judged elsewhere already; just move on
      } else if (err instanceof ApiError) {
        // contract error: surface it, do not queue
        const doc = this.cfg.container.ownerDocument;
        this.cfg.container.prepend(renderRetryBanner(doc, `Rejected: ${err.message}`));
        this.submitting = false;
        return;
      } else {
        // offline: persist and advance optimistically
        this.cfg.queue.enqueue(this.cfg.sessionId, payload);
      }
    } finally {
      this.submitting = false;
    }
    await this.cfg.queue.flush();
    await this.showNext();
  }
}

/** Browser entry point; reads session/evaluator from the query string. */
export function boot(win: Window): void {
  const params = new URLSearchParams(win.location.search);
  const sessionId = params.get("session") ?? "";
  const evaluatorId = params.get("evaluator") ?? "";
  const container = win.document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  if (!sessionId || !evaluatorId) {
    container.textContent = "Open with ?session=<id>&evaluator=<name>.";
    return;
  }
  const api = new SessionApi("");
  const queue = new JudgmentQueue(api, win.localStorage);
  const app = new JudgingApp({ sessionId, evaluatorId, api, queue, container });
  win.addEventListener("online", () => void queue.flush());
  void app.start();
}
