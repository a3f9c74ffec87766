/**
 * Wire types for the experiment service's JSON API. Field names match
 * the server's payloads exactly; nothing here is invented client-side.
 */

/** Event kinds a client is allowed to submit. */
export type ClientEventKind =
  | "image_begin"
  | "click"
  | "move_sample"
  | "description_update";

/** Kinds the server writes on its own; they appear in monitor streams. */
export type ServerEventKind =
  | "session_begin"
  | "description_final"
  | "image_end"
  | "session_end";

export type EventKind = ClientEventKind | ServerEventKind;

/** A client event before a sequence number has been assigned. */
export interface DraftEvent {
  kind: ClientEventKind;
  image_id: string;
  /** Milliseconds since the image was opened. */
  t_ms: number;
  x?: number;
  y?: number;
  text?: string;
}

/** A draft with its batch position; the shape posted to the server. */
export interface WireEvent extends DraftEvent {
  seq: number;
}

/** One committed event as the monitor route returns it. */
export interface LoggedEvent {
  session_id: string;
  participant_id: string;
  experiment_id: string;
  image_id: string | null;
  seq: number;
  kind: EventKind;
  x: number | null;
  y: number | null;
  t_ms: number;
  text: string | null;
}

export interface ExperimentInfo {
  experiment_id: string;
  task_type: "free_view" | "describe";
  blur_sigma_px: number;
  bubble_radius_px: number;
  time_limit_s: number | null;
  mouse_modality: "click" | "move";
  images_per_session: number;
  min_description_chars: number;
  move_sample_hz: number;
  qualification_note: string;
  open: boolean;
}

export interface SessionCreated {
  session_id: string;
  token: string;
  participant_id: string;
  experiment_id: string;
  images: string[];
  committed_through: number;
}

export interface SessionState {
  session_id: string;
  participant_id: string;
  experiment_id: string;
  images: string[];
  status: "open" | "complete" | "abandoned";
  committed_through: number;
  current_image: string | null;
}

export interface PostEventsResult {
  committed_through: number;
  duplicate: boolean;
}

export type AdvanceResult =
  | { committed_through: number; session_complete: false; next_image: string }
  | { committed_through: number; session_complete: true; completion_code: string };

export interface MonitorStream {
  session_id: string;
  participant_id: string;
  events: LoggedEvent[];
}

export interface MonitorPayload {
  experiment: ExperimentInfo;
  image: {
    image_id: string;
    width: number;
    height: number;
    blurred_url: string;
    original_url: string;
  };
  streams: MonitorStream[];
}

/** Error body every non-2xx response carries. */
export interface ErrorBody {
  reason: string;
  message: string;
  expected_next_seq?: number;
  seconds_remaining?: number;
  chars_remaining?: number;
}
