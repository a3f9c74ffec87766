import type { LoggedEvent } from "./wire.js";
import {
  cloneRaster,
  compositeBubble,
  frameHash,
  stampMarker,
  type Raster,
} from "./raster.js";

/** What a participant's stream looked like at slider time t. */
export interface ReplayFrameState {
  /** Every click at or before t, in commit order. */
  clicks: { x: number; y: number; tMs: number }[];
  /** The one bubble that would have been visible: the last click. */
  activeBubble: { x: number; y: number } | null;
  /** Last sampled cursor position, for the move modality. */
  cursor: { x: number; y: number } | null;
  moveSampleCount: number;
  /** Description text as of t (latest update wins). */
  description: string;
  imageOpened: boolean;
  imageEnded: boolean;
}

/**
 * Reduce one session's event stream for one image to its state at time
 * t. Pure: the result depends only on the events with t_ms <= t taken
 * in commit order, so scrubbing back and forth cannot diverge.
 */
export function replayAt(events: LoggedEvent[], tMs: number): ReplayFrameState {
  const state: ReplayFrameState = {
    clicks: [],
    activeBubble: null,
    cursor: null,
    moveSampleCount: 0,
    description: "",
    imageOpened: false,
    imageEnded: false,
  };
  for (const e of events) {
    if (e.t_ms > tMs) continue;
    switch (e.kind) {
      case "image_begin":
        state.imageOpened = true;
        break;
      case "click":
        if (e.x !== null && e.y !== null) {
          state.clicks.push({ x: e.x, y: e.y, tMs: e.t_ms });
          state.activeBubble = { x: e.x, y: e.y };
        }
        break;
      case "move_sample":
        if (e.x !== null && e.y !== null) {
          state.cursor = { x: e.x, y: e.y };
          state.moveSampleCount++;
        }
        break;
      case "description_update":
      case "description_final":
        state.description = e.text ?? "";
        break;
      case "image_end":
        state.imageEnded = true;
        break;
      default:
        break;
    }
  }
  return state;
}

export interface ReplayRenderOptions {
  /** Which base image the experimenter is looking at. */
  view: "blurred" | "original";
  /** Single participant-visible bubble, or cumulative click markers. */
  bubbles: "active" | "markers";
  bubbleRadiusPx: number;
}

const MARKER_HALF_SIZE = 2;
const MARKER_RGBA: [number, number, number, number] = [255, 64, 64, 255];

/**
 * Render a replay frame. Same state and options always produce the
 * same pixels; see frameHash for the equality check.
 */
export function renderReplayFrame(
  blurred: Raster,
  original: Raster,
  state: ReplayFrameState,
  opts: ReplayRenderOptions,
): Raster {
  const base = opts.view === "original" ? original : blurred;
  if (opts.bubbles === "active") {
    if (state.activeBubble !== null) {
      return compositeBubble(
        base,
        original,
        state.activeBubble.x,
        state.activeBubble.y,
        opts.bubbleRadiusPx,
      );
    }
    return cloneRaster(base);
  }
  const out = cloneRaster(base);
  for (const c of state.clicks) {
    stampMarker(out, c.x, c.y, MARKER_HALF_SIZE, MARKER_RGBA);
  }
  return out;
}

/** Hash of a rendered frame, for purity checks and change detection. */
export function replayFrameHash(
  blurred: Raster,
  original: Raster,
  events: LoggedEvent[],
  tMs: number,
  opts: ReplayRenderOptions,
): string {
  return frameHash(renderReplayFrame(blurred, original, replayAt(events, tMs), opts));
}

/** Largest event timestamp, i.e. the slider's right edge. */
export function streamDuration(events: LoggedEvent[]): number {
  let max = 0;
  for (const e of events) {
    if (e.t_ms > max) max = e.t_ms;
  }
  return max;
}
