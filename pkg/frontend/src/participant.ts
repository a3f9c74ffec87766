import { ApiClient, ApiError } from "./api.js";
import { StageTransform } from "./coords.js";
import { descriptionGate } from "./gate.js";
import { EventQueue } from "./queue.js";
import { compositeBubble, type Raster } from "./raster.js";
import { MoveSampler, type SamplerTimers } from "./sampler.js";
import { rasterFromBlob, type Stage } from "./stage.js";
import type { ExperimentInfo } from "./wire.js";

/** Move samples and description updates are posted on this cadence;
 * clicks post immediately. */
const BATCH_INTERVAL_MS = 1000;
const TIMER_REFRESH_MS = 250;

export interface SessionHandle {
  sessionId: string;
  token: string;
  images: string[];
  committedThrough: number;
  /** Index of the first image still to run (0 for a fresh session). */
  startIndex: number;
  /**
   * True when the server already has this image open (a reloaded page).
   * The open marker must not be sent again; the local clock restarts,
   * so events that would run time backwards are refused server-side
   * and surface through the error line.
   */
  resumeOpen?: boolean;
}

export interface ParticipantDeps {
  loadImage?: (imageId: string, variant: "blurred" | "original") => Promise<Raster>;
  timers?: SamplerTimers;
}

const realTimers: SamplerTimers = {
  now: () => performance.now(),
  setTimer: (fn, delayMs) => setTimeout(fn, delayMs),
  clearTimer: (handle) => clearTimeout(handle as number),
};

/**
 * The participant's run page: a native-resolution stage showing the
 * blurred stimulus, click-to-reveal or cursor-following interaction,
 * the description box with its live counter, and the advance control.
 *
 * All coordinates queue in stimulus-pixel space. In click modality at
 * most one bubble is revealed at a time and its center is the last
 * accepted click; every click re-composites from the pristine blurred
 * base so earlier bubbles disappear.
 */
export class ParticipantView {
  readonly queue: EventQueue;

  private readonly loadImage: (
    imageId: string,
    variant: "blurred" | "original",
  ) => Promise<Raster>;
  private readonly timers: SamplerTimers;

  private blurred: Raster | null = null;
  private original: Raster | null = null;
  private transform: StageTransform | null = null;
  private sampler: MoveSampler | null = null;

  private index: number;
  private imageOpen = false;
  private imageOpenedAt = 0;
  private finished = false;

  /** Server-authoritative countdown baseline, reset by each ack. */
  private remainingAtAck: number | null = null;
  private ackAt = 0;

  /** Set when the server called the description too short; cleared on
   * the next edit so the button cannot re-enable on stale text. */
  private gateHold = false;

  private cursor: { x: number; y: number } | null = null;

  private readonly statusEl: HTMLElement;
  private readonly timerEl: HTMLElement;
  private readonly counterEl: HTMLElement;
  private readonly descriptionEl: HTMLTextAreaElement;
  private readonly advanceBtn: HTMLButtonElement;

  private batchTimer: unknown = null;
  private displayTimer: unknown = null;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly experiment: ExperimentInfo,
    private readonly session: SessionHandle,
    private readonly stage: Stage,
    deps: ParticipantDeps = {},
  ) {
    this.loadImage =
      deps.loadImage ??
      (async (imageId, variant) =>
        rasterFromBlob(
          await api.fetchImage(imageId, variant, { token: session.token }),
        ));
    this.timers = deps.timers ?? realTimers;
    this.index = session.startIndex;

    this.queue = new EventQueue(
      (events) => api.postEvents(session.sessionId, session.token, events),
      session.committedThrough,
      (error) => this.showError(error),
    );

    root.appendChild(this.stage.element);
    this.statusEl = el("div", "run-status");
    this.timerEl = el("div", "run-timer");
    this.counterEl = el("span", "run-counter");
    this.descriptionEl = document.createElement("textarea");
    this.descriptionEl.className = "run-description";
    this.advanceBtn = document.createElement("button");
    this.advanceBtn.className = "run-advance";
    this.advanceBtn.textContent = "Next";

    root.appendChild(this.timerEl);
    if (this.experiment.task_type === "describe") {
      root.appendChild(this.descriptionEl);
      root.appendChild(this.counterEl);
      this.descriptionEl.addEventListener("input", () => this.onDescriptionInput());
    }
    root.appendChild(this.advanceBtn);
    root.appendChild(this.statusEl);
    if (this.experiment.qualification_note) {
      this.statusEl.textContent = this.experiment.qualification_note;
    }

    this.advanceBtn.addEventListener("click", () => {
      void this.advance();
    });
    if (this.experiment.mouse_modality === "click") {
      this.stage.element.addEventListener("click", (ev) =>
        this.onStageClick(ev as MouseEvent),
      );
    } else {
      this.stage.element.addEventListener("mousemove", (ev) =>
        this.onStageMove(ev as MouseEvent),
      );
      this.stage.element.addEventListener("mouseleave", () => {
        this.cursor = null;
      });
    }
    this.refreshGate();
  }

  /** Open the current image and start the interaction loops. */
  async begin(): Promise<void> {
    await this.openImage(this.session.images[this.index], {
      sendBegin: this.session.resumeOpen !== true,
    });
    this.batchTimer = this.timers.setTimer(() => this.batchTick(), BATCH_INTERVAL_MS);
    this.displayTimer = this.timers.setTimer(
      () => this.displayTick(),
      TIMER_REFRESH_MS,
    );
  }

  dispose(): void {
    this.sampler?.stop();
    if (this.batchTimer !== null) this.timers.clearTimer(this.batchTimer);
    if (this.displayTimer !== null) this.timers.clearTimer(this.displayTimer);
  }

  /** Milliseconds since the open of the current image. */
  private elapsedMs(): number {
    return this.timers.now() - this.imageOpenedAt;
  }

  private async openImage(
    imageId: string,
    opts: { sendBegin: boolean } = { sendBegin: true },
  ): Promise<void> {
    this.imageOpen = false;
    const [blurred, original] = await Promise.all([
      this.loadImage(imageId, "blurred"),
      this.loadImage(imageId, "original"),
    ]);
    this.blurred = blurred;
    this.original = original;
    this.stage.show(blurred);
    this.transform = new StageTransform(
      () => this.stage.element.getBoundingClientRect(),
      blurred.width,
      blurred.height,
    );
    this.descriptionEl.value = "";
    this.gateHold = false;
    this.refreshGate();

    this.imageOpenedAt = this.timers.now();
    this.remainingAtAck = this.experiment.time_limit_s;
    this.ackAt = this.imageOpenedAt;
    if (opts.sendBegin) {
      this.queue.push({ kind: "image_begin", image_id: imageId, t_ms: 0 });
    }
    this.imageOpen = true;
    await this.queue.flush();
    if (this.experiment.mouse_modality === "move") {
      this.sampler?.stop();
      this.sampler = new MoveSampler(
        this.experiment.move_sample_hz,
        () => this.cursor,
        (x, y, tMs) => {
          this.queue.push({
            kind: "move_sample",
            image_id: imageId,
            x,
            y,
            t_ms: tMs,
          });
        },
        this.timers,
      );
      this.sampler.start();
    }
    this.displayTick(false);
  }

  private onStageClick(ev: MouseEvent): void {
    // Between image_end and the next image_begin clicks mean nothing.
    if (!this.imageOpen || this.transform === null) return;
    const point = this.transform.toStimulus(ev.clientX, ev.clientY);
    if (point === null) return;
    if (this.blurred !== null && this.original !== null) {
      this.stage.show(
        compositeBubble(
          this.blurred,
          this.original,
          point.x,
          point.y,
          this.experiment.bubble_radius_px,
        ),
      );
    }
    this.queue.push({
      kind: "click",
      image_id: this.currentImageId(),
      x: point.x,
      y: point.y,
      t_ms: this.elapsedMs(),
    });
    void this.queue.flush();
  }

  private onStageMove(ev: MouseEvent): void {
    if (!this.imageOpen || this.transform === null) return;
    this.cursor = this.transform.toStimulus(ev.clientX, ev.clientY);
    if (this.cursor !== null && this.blurred !== null && this.original !== null) {
      this.stage.show(
        compositeBubble(
          this.blurred,
          this.original,
          this.cursor.x,
          this.cursor.y,
          this.experiment.bubble_radius_px,
        ),
      );
    }
  }

  private onDescriptionInput(): void {
    this.gateHold = false;
    this.refreshGate();
    if (!this.imageOpen) return;
    this.queue.push({
      kind: "description_update",
      image_id: this.currentImageId(),
      t_ms: this.elapsedMs(),
      text: this.descriptionEl.value,
    });
  }

  private refreshGate(): void {
    if (this.experiment.task_type !== "describe") return;
    const gate = descriptionGate(
      this.descriptionEl.value,
      this.experiment.min_description_chars,
    );
    this.counterEl.textContent = `${gate.count} / ${this.experiment.min_description_chars}`;
    this.advanceBtn.disabled = !gate.enabled || this.gateHold;
  }

  private async advance(): Promise<void> {
    if (!this.imageOpen || this.finished) return;
    const imageId = this.currentImageId();
    await this.queue.flush();
    this.advanceBtn.disabled = true;
    try {
      const result = await this.api.advance(
        this.session.sessionId,
        this.session.token,
        imageId,
        this.experiment.task_type === "describe"
          ? this.descriptionEl.value
          : undefined,
      );
      this.imageOpen = false;
      this.sampler?.stop();
      this.queue.noteServerCommit(result.committed_through);
      if (result.session_complete) {
        this.finish(result.completion_code);
      } else {
        this.index = this.session.images.indexOf(result.next_image);
        await this.openImage(result.next_image);
      }
    } catch (error) {
      if (error instanceof ApiError && error.reason === "advance_too_early") {
        // The server's count is the one that binds; restart the display
        // from its number rather than the local clock.
        this.remainingAtAck = error.body.seconds_remaining ?? null;
        this.ackAt = this.timers.now();
        this.statusEl.textContent = error.body.message;
      } else if (
        error instanceof ApiError &&
        error.reason === "description_too_short"
      ) {
        this.gateHold = true;
        this.statusEl.textContent = error.body.message;
      } else {
        this.showError(error);
      }
    } finally {
      if (!this.finished) this.refreshAdvance();
    }
  }

  private finish(completionCode: string): void {
    this.finished = true;
    this.dispose();
    this.timerEl.textContent = "";
    this.advanceBtn.disabled = true;
    this.statusEl.textContent = `All images done. Completion code: ${completionCode}`;
  }

  private currentImageId(): string {
    return this.session.images[this.index];
  }

  /** Seconds left per the most recent server-acknowledged baseline. */
  remainingSeconds(): number | null {
    if (this.remainingAtAck === null) return null;
    const elapsed = (this.timers.now() - this.ackAt) / 1000;
    return Math.max(0, this.remainingAtAck - elapsed);
  }

  private refreshAdvance(): void {
    if (this.experiment.task_type === "describe") {
      this.refreshGate();
      return;
    }
    const remaining = this.remainingSeconds();
    this.advanceBtn.disabled = remaining !== null && remaining > 0;
  }

  private displayTick(reschedule = true): void {
    const remaining = this.remainingSeconds();
    if (remaining !== null && this.imageOpen) {
      this.timerEl.textContent = `${Math.ceil(remaining)} s remaining`;
    }
    if (!this.finished) this.refreshAdvance();
    if (reschedule && !this.finished) {
      this.displayTimer = this.timers.setTimer(
        () => this.displayTick(),
        TIMER_REFRESH_MS,
      );
    }
  }

  private batchTick(): void {
    if (this.queue.pendingCount > 0) void this.queue.flush();
    if (!this.finished) {
      this.batchTimer = this.timers.setTimer(
        () => this.batchTick(),
        BATCH_INTERVAL_MS,
      );
    }
  }

  private showError(error: unknown): void {
    const message =
      error instanceof ApiError
        ? error.body.message
        : error instanceof Error
          ? error.message
          : String(error);
    this.statusEl.textContent = `Something went wrong: ${message}`;
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}
