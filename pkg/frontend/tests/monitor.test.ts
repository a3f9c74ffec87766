import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { MonitorView } from "../src/monitor.js";
import { frameHash, type Raster } from "../src/raster.js";
import type { LoggedEvent, MonitorPayload } from "../src/wire.js";
import {
  experimentInfo,
  FakeBackend,
  FakeStage,
  logged,
  noisy,
} from "./helpers.js";

const streamA: LoggedEvent[] = [
  logged({ kind: "session_begin", seq: 1, image_id: null }),
  logged({ kind: "image_begin", seq: 2, t_ms: 0 }),
  logged({ kind: "click", seq: 3, t_ms: 400, x: 10, y: 12 }),
  logged({ kind: "description_update", seq: 4, t_ms: 900, text: "a bird" }),
  logged({ kind: "click", seq: 5, t_ms: 1500, x: 30, y: 8 }),
  logged({ kind: "image_end", seq: 6, t_ms: 3200 }),
];

const streamB: LoggedEvent[] = [
  logged({ kind: "image_begin", seq: 2, t_ms: 0, session_id: "s2" }),
  logged({ kind: "click", seq: 3, t_ms: 700, x: 40, y: 30, session_id: "s2" }),
  logged({ kind: "image_end", seq: 4, t_ms: 1000, session_id: "s2" }),
];

function payload(): MonitorPayload {
  return {
    experiment: experimentInfo({ bubble_radius_px: 4 }),
    image: {
      image_id: "img",
      width: 48,
      height: 36,
      blurred_url: "/api/images/img?variant=blurred",
      original_url: "/api/images/img?variant=original",
    },
    streams: [
      { session_id: "s1", participant_id: "p1", events: streamA },
      { session_id: "s2", participant_id: "p2", events: streamB },
    ],
  };
}

interface Setup {
  root: HTMLElement;
  stage: FakeStage;
  view: MonitorView;
  blurred: Raster;
  original: Raster;
  slider: HTMLInputElement;
  select: HTMLSelectElement;
  viewToggle: HTMLInputElement;
  markersToggle: HTMLInputElement;
  description: HTMLElement;
}

async function setup(): Promise<Setup> {
  const backend = new FakeBackend([], experimentInfo());
  backend.monitorPayload = payload();
  const api = new ApiClient("", backend.fetch);
  const stage = new FakeStage();
  const blurred = noisy(48, 36, 1);
  const original = noisy(48, 36, 2);
  const root = document.createElement("div");
  const view = new MonitorView(root, api, "secret", stage, {
    loadImage: async (_id, variant) => (variant === "blurred" ? blurred : original),
  });
  await view.load("exp1", "img");
  const checkboxes = root.querySelectorAll<HTMLInputElement>(
    'input[type="checkbox"]',
  );
  return {
    root,
    stage,
    view,
    blurred,
    original,
    slider: root.querySelector("input.monitor-slider") as HTMLInputElement,
    select: root.querySelector("select.monitor-session") as HTMLSelectElement,
    viewToggle: checkboxes[0],
    markersToggle: checkboxes[1],
    description: root.querySelector(".monitor-description") as HTMLElement,
  };
}

function scrub(slider: HTMLInputElement, t: number): void {
  slider.value = String(t);
  slider.dispatchEvent(new Event("input", { bubbles: true }));
}

describe("MonitorView", () => {
  it("lists every session and opens at the end of the first stream", async () => {
    const { select, slider, description } = await setup();
    expect(select.options.length).toBe(2);
    expect(slider.max).toBe("3200");
    expect(slider.value).toBe("3200");
    expect(description.textContent).toBe("a bird");
  });

  it("shows the plain blurred stimulus at time zero", async () => {
    const { stage, slider, blurred, description } = await setup();
    scrub(slider, 0);
    expect(frameHash(stage.last)).toBe(frameHash(blurred));
    expect(description.textContent).toBe("");
  });

  it("renders scrubbing as a pure function of time", async () => {
    const { stage, slider } = await setup();
    scrub(slider, 1500);
    const first = frameHash(stage.last);
    scrub(slider, 400);
    expect(frameHash(stage.last)).not.toBe(first);
    scrub(slider, 1500);
    expect(frameHash(stage.last)).toBe(first);
  });

  it("toggles between the blurred and original base", async () => {
    const { stage, slider, viewToggle, original } = await setup();
    scrub(slider, 0);
    viewToggle.checked = true;
    viewToggle.dispatchEvent(new Event("change", { bubbles: true }));
    expect(frameHash(stage.last)).toBe(frameHash(original));
  });

  it("toggles between the active bubble and cumulative markers", async () => {
    const { stage, slider, markersToggle } = await setup();
    scrub(slider, 1500);
    const active = frameHash(stage.last);
    markersToggle.checked = true;
    markersToggle.dispatchEvent(new Event("change", { bubbles: true }));
    expect(frameHash(stage.last)).not.toBe(active);
  });

  it("switches sessions", async () => {
    const { stage, slider, select } = await setup();
    const firstFrame = frameHash(stage.last);
    select.selectedIndex = 1;
    select.dispatchEvent(new Event("change", { bubbles: true }));
    expect(slider.max).toBe("1000");
    expect(slider.value).toBe("1000");
    expect(frameHash(stage.last)).not.toBe(firstFrame);
  });

  it("labels the slider position in seconds", async () => {
    const { root, slider } = await setup();
    scrub(slider, 1500);
    const label = root.querySelector(".monitor-time") as HTMLElement;
    expect(label.textContent).toBe("1.50 s");
  });
});
