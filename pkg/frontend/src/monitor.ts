import { ApiClient } from "./api.js";
import type { Raster } from "./raster.js";
import {
  renderReplayFrame,
  replayAt,
  streamDuration,
  type ReplayRenderOptions,
} from "./replay.js";
import { rasterFromBlob, type Stage } from "./stage.js";
import type { MonitorPayload } from "./wire.js";

export interface MonitorDeps {
  loadImage?: (
    imageId: string,
    variant: "blurred" | "original",
  ) => Promise<Raster>;
}

/**
 * The experimenter's live view of one stimulus: pick a session, scrub
 * its timeline, and see the frame as the participant saw it, with a
 * cumulative-marker and blurred/original toggle. Every rendered frame
 * is a pure function of the selected stream's event prefix up to the
 * slider time, so scrubbing back to a time reproduces the same pixels.
 */
export class MonitorView {
  private payload: MonitorPayload | null = null;
  private blurred: Raster | null = null;
  private original: Raster | null = null;

  private readonly loadImage: (
    imageId: string,
    variant: "blurred" | "original",
  ) => Promise<Raster>;

  private readonly sessionSelect: HTMLSelectElement;
  private readonly slider: HTMLInputElement;
  private readonly timeLabel: HTMLElement;
  private readonly viewToggle: HTMLInputElement;
  private readonly markersToggle: HTMLInputElement;
  private readonly descriptionEl: HTMLElement;
  private readonly statusEl: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly key: string,
    private readonly stage: Stage,
    deps: MonitorDeps = {},
  ) {
    this.loadImage =
      deps.loadImage ??
      (async (imageId, variant) =>
        rasterFromBlob(
          await api.fetchImage(imageId, variant, { experimenterKey: key }),
        ));

    root.appendChild(this.stage.element);

    const controls = document.createElement("div");
    controls.className = "monitor-controls";

    this.sessionSelect = document.createElement("select");
    this.sessionSelect.className = "monitor-session";
    this.sessionSelect.addEventListener("change", () => this.onSessionChange());

    this.slider = document.createElement("input");
    this.slider.type = "range";
    this.slider.className = "monitor-slider";
    this.slider.min = "0";
    this.slider.step = "10";
    this.slider.addEventListener("input", () => this.render());

    this.timeLabel = document.createElement("span");
    this.timeLabel.className = "monitor-time";

    this.viewToggle = labeledCheckbox(controls, "show original");
    this.markersToggle = labeledCheckbox(controls, "all clicks as markers");
    this.viewToggle.addEventListener("change", () => this.render());
    this.markersToggle.addEventListener("change", () => this.render());

    controls.appendChild(this.sessionSelect);
    controls.appendChild(this.slider);
    controls.appendChild(this.timeLabel);
    root.appendChild(controls);

    this.descriptionEl = document.createElement("div");
    this.descriptionEl.className = "monitor-description";
    root.appendChild(this.descriptionEl);

    this.statusEl = document.createElement("div");
    this.statusEl.className = "monitor-status";
    root.appendChild(this.statusEl);
  }

  /** Fetch the streams for one stimulus and show the first session. */
  async load(experimentId: string, imageId: string): Promise<void> {
    this.payload = await this.api.monitor(experimentId, imageId, this.key);
    const [blurred, original] = await Promise.all([
      this.loadImage(imageId, "blurred"),
      this.loadImage(imageId, "original"),
    ]);
    this.blurred = blurred;
    this.original = original;

    this.sessionSelect.replaceChildren();
    for (const stream of this.payload.streams) {
      const option = document.createElement("option");
      option.value = stream.session_id;
      option.textContent = `${stream.session_id} (${stream.participant_id})`;
      this.sessionSelect.appendChild(option);
    }
    this.statusEl.textContent =
      this.payload.streams.length === 0 ? "No sessions for this image yet." : "";
    this.onSessionChange();
  }

  private selectedEvents() {
    if (this.payload === null) return null;
    const stream = this.payload.streams[this.sessionSelect.selectedIndex];
    return stream === undefined ? null : stream.events;
  }

  private onSessionChange(): void {
    const events = this.selectedEvents();
    const duration = events === null ? 0 : streamDuration(events);
    this.slider.max = String(duration);
    this.slider.value = String(duration);
    this.render();
  }

  /** Current slider time in ms. */
  get time(): number {
    return Number(this.slider.value);
  }

  renderOptions(): ReplayRenderOptions {
    return {
      view: this.viewToggle.checked ? "original" : "blurred",
      bubbles: this.markersToggle.checked ? "markers" : "active",
      bubbleRadiusPx: this.payload?.experiment.bubble_radius_px ?? 0,
    };
  }

  render(): void {
    const events = this.selectedEvents();
    if (events === null || this.blurred === null || this.original === null) {
      return;
    }
    const t = this.time;
    const state = replayAt(events, t);
    this.stage.show(
      renderReplayFrame(this.blurred, this.original, state, this.renderOptions()),
    );
    this.timeLabel.textContent = `${(t / 1000).toFixed(2)} s`;
    this.descriptionEl.textContent = state.description;
  }
}

function labeledCheckbox(parent: HTMLElement, text: string): HTMLInputElement {
  const label = document.createElement("label");
  const box = document.createElement("input");
  box.type = "checkbox";
  label.appendChild(box);
  label.appendChild(document.createTextNode(text));
  parent.appendChild(label);
  return box;
}
