// Controller unit tests against a scripted fake server.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { PollTimer, SessionController } from "../src/controller.js";
import { sparkline } from "../src/ui.js";
import type { NextResponse, PendingItem, TaskInfo } from "../src/types.js";

const TASK: TaskInfo = { task_kind: "binary", num_classes: 2, feature_dim: 4 };

function pending(itemId: string, used = 0): PendingItem {
  return {
    item_id: itemId,
    text: `text of ${itemId}`,
    suggestion: [
      { class: 1, prob: 0.93 },
      { class: 0, prob: 0.065 },
      { class: 2, prob: 0.005 },
    ],
    scores: null,
    rule: "warmup",
    phase: "warmup",
    budget: { used, total: 10 },
  };
}

interface FakeServer {
  nextQueue: (PendingItem | null)[];
  used: number;
  submits: Array<{ item_id: string; label: unknown }>;
  failNextSubmit: "conflict" | "network" | null;
}

function makeClient(server: FakeServer): ApiClient {
  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const respond = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status });
    if (input.endsWith("/next")) {
      const item = server.nextQueue.length > 0 ? server.nextQueue[0]! : null;
      const body: NextResponse = {
        status: item ? "awaiting_label" : "done",
        item,
        budget: { used: server.used, total: 10 },
      };
      return respond(200, body);
    }
    if (input.endsWith("/labels")) {
      if (server.failNextSubmit === "network") {
        server.failNextSubmit = null;
        throw new TypeError("fetch failed");
      }
      const payload = JSON.parse(String(init?.body));
      const current = server.nextQueue[0];
      if (server.failNextSubmit === "conflict" || !current || payload.item_id !== current.item_id) {
        server.failNextSubmit = null;
        return respond(409, { error: "wrong_item", detail: "awaiting another item" });
      }
      server.submits.push(payload);
      server.nextQueue.shift();
      server.used += 1;
      return respond(200, {
        ok: true,
        status: server.nextQueue.length > 0 ? "awaiting_label" : "done",
        budget: { used: server.used, total: 10 },
        phase: "stream",
      });
    }
    if (input.includes("/metrics")) {
      return respond(200, {
        session_id: "s",
        status: "awaiting_label",
        phase: "stream",
        budget: { used: server.used, total: 10 },
        counts: { human: server.used, model: 3, reallocated: 0, reannotated: 0 },
        annotated: server.used + 3,
        quality_overall: 0.875,
        quality_model_annotated: 0.75,
        train_steps: server.used,
        last_loss: null,
      });
    }
    return respond(404, { error: "not_found", detail: input });
  };
  return new ApiClient("http://fake", fetchFn);
}

function makeController(server: FakeServer): SessionController {
  return new SessionController(makeClient(server), "s", TASK);
}

function freshServer(): FakeServer {
  return {
    nextQueue: [pending("item-a"), pending("item-b", 1)],
    used: 0,
    submits: [],
    failNextSubmit: null,
  };
}

describe("SessionController", () => {
  let server: FakeServer;

  beforeEach(() => {
    server = freshServer();
  });

  it("loads the pending item and the server's gauge", async () => {
    const c = makeController(server);
    await c.refresh();
    expect(c.getState().phase).toBe("awaiting");
    expect(c.getState().item?.item_id).toBe("item-a");
    expect(c.getState().gauge).toEqual({ used: 0, total: 10 });
  });

  it("hides suggestion entries below one percent", async () => {
    const c = makeController(server);
    await c.refresh();
    const shown = c.visibleSuggestions();
    expect(shown.map((s) => s.class)).toEqual([1, 0]);
  });

  it("submits exactly the last-fetched item id", async () => {
    const c = makeController(server);
    await c.refresh();
    c.setDraft(1);
    expect(await c.submit()).toBe(true);
    expect(server.submits).toEqual([{ item_id: "item-a", label: 1 }]);
    // after the ack it refreshed onto the next server item
    expect(c.getState().item?.item_id).toBe("item-b");
  });

  it("does nothing without a drafted label", async () => {
    const c = makeController(server);
    await c.refresh();
    expect(await c.submit()).toBe(false);
    expect(server.submits).toEqual([]);
  });

  it("empty tag drafts cannot be submitted", async () => {
    const c = makeController(server);
    await c.refresh();
    c.setDraft([]);
    expect(await c.submit()).toBe(false);
  });

  it("recovers from a 409 by resyncing to the server's item", async () => {
    const c = makeController(server);
    await c.refresh();
    c.setDraft(1);
    server.failNextSubmit = "conflict";
    expect(await c.submit()).toBe(false);
    const state = c.getState();
    expect(state.banner).toMatch(/out of sync/);
    expect(state.item?.item_id).toBe("item-a"); // resynced, not advanced
    expect(state.draft).toBeNull(); // stale draft dropped
    expect(server.used).toBe(0); // the ledger never moved
  });

  it("keeps the draft and raises a banner on network failure", async () => {
    const c = makeController(server);
    await c.refresh();
    c.setDraft(0);
    server.failNextSubmit = "network";
    expect(await c.submit()).toBe(false);
    expect(c.getState().draft).toBe(0);
    expect(c.getState().banner).toMatch(/draft kept/);
    // retrying after the network recovers succeeds with the same draft
    expect(await c.submit()).toBe(true);
    expect(server.submits).toEqual([{ item_id: "item-a", label: 0 }]);
  });

  it("drops a draft when the pending item changes server-side", async () => {
    const c = makeController(server);
    await c.refresh();
    c.setDraft(1);
    server.nextQueue.shift(); // server moved on without us
    await c.refresh();
    expect(c.getState().item?.item_id).toBe("item-b");
    expect(c.getState().draft).toBeNull();
  });

  it("passes metrics through untouched", async () => {
    const c = makeController(server);
    await c.refreshMetrics();
    const m = c.getState().metrics;
    expect(m?.quality_overall).toBe(0.875);
    expect(m?.counts).toEqual({ human: 0, model: 3, reallocated: 0, reannotated: 0 });
    expect(c.getState().qualityHistory).toEqual([0.875]);
  });

  it("toggles tags into a sorted draft", () => {
    const c = makeController(server);
    c.toggleTag(5);
    c.toggleTag(2);
    expect(c.getState().draft).toEqual([2, 5]);
    c.toggleTag(5);
    expect(c.getState().draft).toEqual([2]);
  });

  it("reports completion when the server has nothing pending", async () => {
    server.nextQueue = [];
    const c = makeController(server);
    await c.refresh();
    expect(c.getState().phase).toBe("done");
    expect(c.getState().item).toBeNull();
  });
});

describe("ApiError", () => {
  it("flags conflicts", () => {
    expect(new ApiError(409, "wrong_item", "x").isConflict).toBe(true);
    expect(new ApiError(422, "invalid_label", "x").isConflict).toBe(false);
  });
});

describe("PollTimer", () => {
  it("ticks on its interval and stops cleanly", () => {
    vi.useFakeTimers();
    const timer = new PollTimer(1000);
    let ticks = 0;
    timer.start(async () => {
      ticks += 1;
    });
    vi.advanceTimersByTime(3500);
    timer.stop();
    vi.advanceTimersByTime(2000);
    expect(ticks).toBe(3);
    vi.useRealTimers();
  });
});

describe("sparkline", () => {
  it("maps values onto glyph heights", () => {
    expect(sparkline([0, 0.5, 1])).toBe("▁▅█");
    expect(sparkline([])).toBe("");
  });
});
