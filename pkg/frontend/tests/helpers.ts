import { fillRaster, makeRaster, type Raster } from "../src/raster.js";
import type { SamplerTimers } from "../src/sampler.js";
import type { Stage } from "../src/stage.js";
import type {
  ErrorBody,
  ExperimentInfo,
  LoggedEvent,
  MonitorPayload,
  WireEvent,
} from "../src/wire.js";

export function solid(
  width: number,
  height: number,
  rgba: [number, number, number, number],
): Raster {
  return fillRaster(makeRaster(width, height), rgba);
}

/** Deterministic pseudo-random pixels so frame hashes are meaningful. */
export function noisy(width: number, height: number, seed: number): Raster {
  const r = makeRaster(width, height);
  let state = seed >>> 0 || 1;
  for (let i = 0; i < r.data.length; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    r.data[i] = state & 0xff;
  }
  return r;
}

interface ScheduledTimer {
  at: number;
  fn: () => void;
  id: number;
}

/**
 * Manual clock for sampler and view tests. advance() runs due timers
 * in their scheduled order; jump() moves the clock without firing, the
 * way a throttled background tab starves setTimeout.
 */
export class FakeTimers implements SamplerTimers {
  private t = 0;
  private nextId = 1;
  private queue: ScheduledTimer[] = [];

  now = (): number => this.t;

  setTimer = (fn: () => void, delayMs: number): unknown => {
    const timer = { at: this.t + delayMs, fn, id: this.nextId++ };
    this.queue.push(timer);
    return timer.id;
  };

  clearTimer = (handle: unknown): void => {
    this.queue = this.queue.filter((timer) => timer.id !== handle);
  };

  advance(ms: number): void {
    const end = this.t + ms;
    for (;;) {
      let next: ScheduledTimer | null = null;
      for (const timer of this.queue) {
        if (timer.at > end) continue;
        if (next === null || timer.at < next.at || (timer.at === next.at && timer.id < next.id)) {
          next = timer;
        }
      }
      if (next === null) break;
      this.queue.splice(this.queue.indexOf(next), 1);
      this.t = Math.max(this.t, next.at);
      next.fn();
    }
    this.t = end;
  }

  jump(ms: number): void {
    this.t += ms;
  }
}

/** Records frames instead of drawing them. */
export class FakeStage implements Stage {
  readonly element: HTMLElement = document.createElement("div");
  frames: Raster[] = [];
  width = 0;
  height = 0;

  setSize(width: number, height: number): void {
    this.width = width;
    this.height = height;
  }

  show(frame: Raster): void {
    this.frames.push(frame);
  }

  get last(): Raster {
    if (this.frames.length === 0) throw new Error("nothing shown yet");
    return this.frames[this.frames.length - 1];
  }
}

/** Pin the element's on-screen rect; jsdom has no layout. */
export function stubRect(
  el: HTMLElement,
  rect: { left: number; top: number; width: number; height: number },
): void {
  el.getBoundingClientRect = () =>
    ({
      x: rect.left,
      y: rect.top,
      left: rect.left,
      top: rect.top,
      width: rect.width,
      height: rect.height,
      right: rect.left + rect.width,
      bottom: rect.top + rect.height,
      toJSON: () => ({}),
    }) as DOMRect;
}

export function experimentInfo(
  overrides: Partial<ExperimentInfo> = {},
): ExperimentInfo {
  return {
    experiment_id: "exp1",
    task_type: "free_view",
    blur_sigma_px: 12,
    bubble_radius_px: 16,
    time_limit_s: null,
    mouse_modality: "click",
    images_per_session: 2,
    min_description_chars: 150,
    move_sample_hz: 100,
    qualification_note: "",
    open: true,
    ...overrides,
  };
}

export function logged(
  partial: Partial<LoggedEvent> & { kind: LoggedEvent["kind"]; seq: number },
): LoggedEvent {
  return {
    session_id: "s1",
    participant_id: "p1",
    experiment_id: "exp1",
    image_id: "img",
    x: null,
    y: null,
    t_ms: 0,
    text: null,
    ...partial,
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/**
 * In-memory stand-in for the experiment service, faithful to the parts
 * of the contract the views depend on: per-session seq continuity,
 * server-written closing events consuming seqs, and the advance
 * response shapes.
 */
export class FakeBackend {
  committed = 1;
  posted: WireEvent[] = [];
  batches: WireEvent[][] = [];
  /** Shifted one per advance call before normal handling. */
  advanceErrors: ErrorBody[] = [];
  /** Shifted one per events post before normal handling. */
  postErrors: { status: number; body: ErrorBody }[] = [];
  monitorPayload: MonitorPayload | null = null;
  completionCode = "c0de4done1";

  constructor(
    readonly images: string[],
    readonly experiment: ExperimentInfo,
  ) {}

  eventsOf(kind: string): WireEvent[] {
    return this.posted.filter((e) => e.kind === kind);
  }

  fetch = async (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const url = new URL(String(input), "http://backend.test");
    const method = init?.method ?? "GET";
    const body: unknown =
      typeof init?.body === "string" ? JSON.parse(init.body) : null;
    if (method === "POST" && url.pathname.endsWith("/events")) {
      return this.handleEvents(body as { events: WireEvent[] });
    }
    if (method === "POST" && url.pathname.endsWith("/advance")) {
      return this.handleAdvance(
        body as { image_id: string; description?: string },
      );
    }
    if (method === "GET" && url.pathname.startsWith("/api/monitor/")) {
      if (this.monitorPayload === null) {
        return json(404, { reason: "unknown_image", message: "not scripted" });
      }
      return json(200, this.monitorPayload);
    }
    return json(404, { reason: "not_found", message: url.pathname });
  };

  private handleEvents(body: { events: WireEvent[] }): Response {
    const scripted = this.postErrors.shift();
    if (scripted !== undefined) return json(scripted.status, scripted.body);
    const events = body.events;
    for (let i = 0; i < events.length; i++) {
      if (events[i].seq !== this.committed + 1 + i) {
        return json(409, {
          reason: "seq_conflict",
          message: `expected seq ${this.committed + 1}`,
          expected_next_seq: this.committed + 1,
        });
      }
    }
    this.posted.push(...events);
    this.batches.push(events);
    this.committed += events.length;
    return json(200, { committed_through: this.committed, duplicate: false });
  }

  private handleAdvance(body: {
    image_id: string;
    description?: string;
  }): Response {
    const scripted = this.advanceErrors.shift();
    if (scripted !== undefined) return json(409, scripted);
    if (this.experiment.task_type === "describe") {
      const description = body.description ?? "";
      const short = this.experiment.min_description_chars - description.length;
      if (short > 0) {
        return json(409, {
          reason: "description_too_short",
          message: `${short} more characters required`,
          chars_remaining: short,
        });
      }
      this.committed += 1;
    }
    this.committed += 1;
    const index = this.images.indexOf(body.image_id);
    if (index + 1 >= this.images.length) {
      this.committed += 1;
      return json(200, {
        committed_through: this.committed,
        session_complete: true,
        completion_code: this.completionCode,
      });
    }
    return json(200, {
      committed_through: this.committed,
      session_complete: false,
      next_image: this.images[index + 1],
    });
  }
}

/** Let queued promise callbacks run (real macrotask, not the fake clock). */
export function settle(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
