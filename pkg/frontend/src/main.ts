// Entry point: binds a session (from the query string) to the console UI
// and polls the server once a second so the gauge and metrics stay fresh.

import { ApiClient } from "./api.js";
import { PollTimer, SessionController } from "./controller.js";
import { mount } from "./ui.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  const datasetId = params.get("dataset");
  const api = new ApiClient("");

  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  let sid = sessionId;
  let dsid = datasetId;
  if (!sid) {
    if (!dsid) {
      root.textContent =
        "open with ?session=<id> or ?dataset=<id> (a session will be created)";
      return;
    }
    const created = await api.createSession(dsid, {});
    sid = created.session_id;
  }

  const info = await api.sessionInfo(sid);
  if (!dsid) {
    // the task shape is discoverable from any dataset; sessions echo counts
    // but not the task, so fall back to binary rendering when unknown
    dsid = params.get("dataset");
  }
  const task = dsid
    ? (await api.datasetInfo(dsid)).task
    : { task_kind: "binary" as const, num_classes: 2, feature_dim: 0 };

  const controller = new SessionController(api, sid, task);
  mount(root, controller);
  await controller.refresh();
  await controller.refreshMetrics();

  const poll = new PollTimer(1000);
  poll.start(async () => {
    const state = controller.getState();
    if (state.phase !== "awaiting") await controller.refresh();
    await controller.refreshMetrics();
    if (controller.getState().phase === "done") poll.stop();
  });
  void info;
}

void boot();
