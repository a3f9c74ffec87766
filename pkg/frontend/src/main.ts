import { ApiClient } from "./api.js";
import { MonitorView } from "./monitor.js";
import { ParticipantView, type SessionHandle } from "./participant.js";
import { CanvasStage } from "./stage.js";

export type Route =
  | { page: "start" }
  | { page: "run"; sessionId: string; token: string }
  | { page: "monitor"; experimentId: string; key: string; imageId: string | null };

/**
 * Map a location to one of the three pages. Secrets travel in the
 * query string so run and monitor links can be handed out whole.
 */
export function parseRoute(pathname: string, search: string): Route | null {
  const params = new URLSearchParams(search);
  if (pathname === "/" || pathname === "/index.html") {
    return { page: "start" };
  }
  const run = pathname.match(/^\/run\/([^/]+)$/);
  if (run !== null) {
    return { page: "run", sessionId: run[1], token: params.get("token") ?? "" };
  }
  const monitor = pathname.match(/^\/monitor\/([^/]+)$/);
  if (monitor !== null) {
    return {
      page: "monitor",
      experimentId: monitor[1],
      key: params.get("key") ?? "",
      imageId: params.get("image"),
    };
  }
  return null;
}

function message(root: HTMLElement, text: string): void {
  const line = document.createElement("p");
  line.textContent = text;
  root.appendChild(line);
}

async function mountRun(
  root: HTMLElement,
  api: ApiClient,
  sessionId: string,
  token: string,
): Promise<void> {
  if (token === "") {
    message(root, "This run link is missing its token.");
    return;
  }
  const state = await api.getSession(sessionId, token);
  if (state.status === "complete") {
    message(root, "This session is already complete.");
    return;
  }
  if (state.status === "abandoned") {
    message(root, "This session was closed by the experimenter.");
    return;
  }

  let handle: SessionHandle;
  if (state.current_image !== null) {
    handle = {
      sessionId,
      token,
      images: state.images,
      committedThrough: state.committed_through,
      startIndex: state.images.indexOf(state.current_image),
      resumeOpen: true,
    };
  } else if (state.committed_through <= 1) {
    handle = {
      sessionId,
      token,
      images: state.images,
      committedThrough: state.committed_through,
      startIndex: 0,
    };
  } else {
    // The page went away in the moment between finishing one image and
    // opening the next; the log knows, the browser does not.
    message(
      root,
      "This session stopped between images and cannot be resumed here. " +
        "Please contact the experimenter.",
    );
    return;
  }

  const experiment = await api.getExperiment(state.experiment_id);
  const view = new ParticipantView(
    root,
    api,
    experiment,
    handle,
    new CanvasStage(document.createElement("canvas")),
  );
  await view.begin();
}

function mountStart(root: HTMLElement, api: ApiClient): void {
  const form = document.createElement("form");
  const experimentInput = textInput(form, "experiment id");
  const participantInput = textInput(form, "participant id");
  const go = document.createElement("button");
  go.textContent = "Start";
  form.appendChild(go);
  const status = document.createElement("p");
  root.appendChild(form);
  root.appendChild(status);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    api
      .createSession(experimentInput.value.trim(), participantInput.value.trim())
      .then((created) => {
        window.location.href = `/run/${created.session_id}?token=${encodeURIComponent(created.token)}`;
      })
      .catch((error: Error) => {
        status.textContent = error.message;
      });
  });
}

function mountMonitor(
  root: HTMLElement,
  api: ApiClient,
  experimentId: string,
  key: string,
  imageId: string | null,
): void {
  const form = document.createElement("form");
  const imageInput = textInput(form, "image id");
  if (imageId !== null) imageInput.value = imageId;
  const load = document.createElement("button");
  load.textContent = "Load";
  form.appendChild(load);
  const status = document.createElement("p");
  root.appendChild(form);

  const view = new MonitorView(
    root,
    api,
    key,
    new CanvasStage(document.createElement("canvas")),
  );
  root.appendChild(status);

  const show = (id: string) => {
    view.load(experimentId, id).catch((error: Error) => {
      status.textContent = error.message;
    });
  };
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    show(imageInput.value.trim());
  });
  if (imageId !== null) show(imageId);
}

function textInput(parent: HTMLElement, placeholder: string): HTMLInputElement {
  const input = document.createElement("input");
  input.placeholder = placeholder;
  parent.appendChild(input);
  return input;
}

/** Entry point: pick the page for the current location and mount it. */
export async function mount(root: HTMLElement, loc: Location): Promise<void> {
  const api = new ApiClient();
  const route = parseRoute(loc.pathname, loc.search);
  if (route === null) {
    message(root, "Page not found.");
    return;
  }
  switch (route.page) {
    case "start":
      mountStart(root, api);
      break;
    case "run":
      await mountRun(root, api, route.sessionId, route.token).catch(
        (error: Error) => message(root, error.message),
      );
      break;
    case "monitor":
      mountMonitor(root, api, route.experimentId, route.key, route.imageId);
      break;
  }
}
