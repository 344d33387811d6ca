/** Per-item listen gating: submit unlocks only after every item has
 * actually played for a minimum number of seconds. Seeking does not
 * count; only forward playback progress accumulates. */

export const MIN_LISTEN_S = 3.0;

// timeupdate fires roughly 4x/second; anything larger is a seek
const MAX_STEP_S = 1.0;

export class PlayGate {
  private listened = new Map<string, number>();
  private lastTime = new Map<string, number>();

  constructor(
    readonly positions: readonly string[],
    readonly minListenS: number = MIN_LISTEN_S,
  ) {
    for (const p of positions) {
      this.listened.set(p, 0);
      this.lastTime.set(p, 0);
    }
  }

  /** Feed playback position updates (audio `timeupdate`). */
  update(position: string, currentTimeS: number): void {
    if (!this.listened.has(position)) {
      throw new Error(`unknown position: ${position}`);
    }
    const last = this.lastTime.get(position)!;
    const step = currentTimeS - last;
    if (step > 0 && step <= MAX_STEP_S) {
      this.listened.set(position, this.listened.get(position)! + step);
    }
    this.lastTime.set(position, currentTimeS);
  }

  listenedSeconds(position: string): number {
    return this.listened.get(position) ?? 0;
  }

  satisfied(position: string): boolean {
    return this.listenedSeconds(position) >= this.minListenS;
  }

  /** True once every item meets the minimum. */
  allSatisfied(): boolean {
    return this.positions.every((p) => this.satisfied(p));
  }

  reset(): void {
    for (const p of this.positions) {
      this.listened.set(p, 0);
      this.lastTime.set(p, 0);
    }
  }
}
