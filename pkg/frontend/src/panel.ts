/** Per-panel request lifecycle: at most one in-flight request per panel;
 * responses from superseded submissions are discarded. */

export interface PanelResult<T> {
  value: T | null;
  error: string | null;
  /** true when a newer submission superseded this one. */
  stale: boolean;
}

export class PanelRunner<T> {
  private generation = 0;
  private inFlight = false;

  get busy(): boolean {
    return this.inFlight;
  }

  /** Run `task`; if submit() is called again before it settles, the older
   * result is reported stale and never surfaces as the panel value. */
  async submit(task: () => Promise<T>): Promise<PanelResult<T>> {
    const myGen = ++this.generation;
    this.inFlight = true;
    try {
      const value = await task();
      if (myGen !== this.generation) {
        return { value: null, error: null, stale: true };
      }
      return { value, error: null, stale: false };
    } catch (err) {
      if (myGen !== this.generation) {
        return { value: null, error: null, stale: true };
      }
      const msg = err instanceof Error ? err.message : String(err);
      return { value: null, error: msg, stale: false };
    } finally {
      if (myGen === this.generation) {
        this.inFlight = false;
      }
    }
  }
}

/** Seed bookkeeping: panels display the seed that produced the current
 * result and can re-roll (clear) or pin (replay) it. */
export class SeedBox {
  private seed: number | undefined;

  /** Seed to send with the next request; undefined lets the server draw. */
  get current(): number | undefined {
    return this.seed;
  }

  /** Record the seed the server echoed back. */
  record(seed: number): void {
    this.seed = seed;
  }

  /** Forget the pinned seed so the next submission gets a fresh one. */
  reroll(): void {
    this.seed = undefined;
  }
}
