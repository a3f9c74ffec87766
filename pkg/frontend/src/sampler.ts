export type SampleSink = (x: number, y: number, tMs: number) => void;

export interface SamplerTimers {
  now: () => number;
  setTimer: (fn: () => void, delayMs: number) => unknown;
  clearTimer: (handle: unknown) => void;
}

const realTimers: SamplerTimers = {
  now: () => performance.now(),
  setTimer: (fn, delayMs) => setTimeout(fn, delayMs),
  clearTimer: (handle) => clearTimeout(handle as number),
};

/**
 * Fixed-rate cursor sampler for the move modality.
 *
 * Ticks are scheduled against the wall clock (tick n fires at
 * start + n/hz), so small timer jitter does not accumulate into a
 * drifting rate. A stationary cursor keeps producing samples with the
 * repeated position. There is no catch-up after a stall: if the browser
 * throttles timers (hidden tab), the missing interval stays visible as
 * a gap in t_ms rather than being filled with invented samples.
 */
export class MoveSampler {
  private startT = 0;
  private nextTick = 0;
  private handle: unknown = null;
  private running = false;

  constructor(
    private readonly hz: number,
    private readonly position: () => { x: number; y: number } | null,
    private readonly sink: SampleSink,
    private readonly timers: SamplerTimers = realTimers,
  ) {
    if (!(hz > 0)) throw new Error(`sample rate must be > 0, got ${hz}`);
  }

  get periodMs(): number {
    return 1000 / this.hz;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.startT = this.timers.now();
    this.nextTick = 1;
    this.schedule();
  }

  stop(): void {
    this.running = false;
    if (this.handle !== null) {
      this.timers.clearTimer(this.handle);
      this.handle = null;
    }
  }

  private schedule(): void {
    const due = this.startT + this.nextTick * this.periodMs;
    const delay = Math.max(0, due - this.timers.now());
    this.handle = this.timers.setTimer(() => this.tick(), delay);
  }

  private tick(): void {
    if (!this.running) return;
    const now = this.timers.now();
    const pos = this.position();
    if (pos !== null) {
      this.sink(pos.x, pos.y, now - this.startT);
    }
    // Skip any ticks that are already in the past instead of firing
    // them back to back; honesty over nominal count.
    const elapsedTicks = Math.floor((now - this.startT) / this.periodMs);
    this.nextTick = Math.max(this.nextTick + 1, elapsedTicks + 1);
    this.schedule();
  }
}
