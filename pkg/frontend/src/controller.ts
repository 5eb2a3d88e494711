// Session state machine behind the annotation console.
//
// The controller owns the labeling flow so the DOM layer stays dumb:
// it fetches the awaiting item, tracks the label the human has drafted,
// submits, and keeps itself in sync with the server.  Every number it
// exposes comes from a server response; nothing statistical is computed
// client-side.
//
// Invariants:
// * a submit always names the item most recently fetched from the server;
// * a 409 conflict triggers a resync (refetch of the pending item);
// * a network failure keeps the drafted label and raises a retry banner.

import { ApiClient, ApiError } from "./api.js";
import type {
  BudgetGauge,
  Label,
  PendingItem,
  SessionMetrics,
  SuggestionEntry,
  TaskInfo,
} from "./types.js";

export type Phase = "loading" | "awaiting" | "done";

export interface ControllerState {
  phase: Phase;
  item: PendingItem | null;
  draft: Label | null;
  gauge: BudgetGauge | null;
  metrics: SessionMetrics | null;
  banner: string | null;
  qualityHistory: number[];
}

type Listener = (state: ControllerState) => void;

const MIN_VISIBLE_PROB = 0.01;

export class SessionController {
  private state: ControllerState = {
    phase: "loading",
    item: null,
    draft: null,
    gauge: null,
    metrics: null,
    banner: null,
    qualityHistory: [],
  };
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    readonly sessionId: string,
    readonly task: TaskInfo,
  ) {}

  getState(): ControllerState {
    return this.state;
  }

  onChange(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Suggestion entries worth showing; probabilities under 1% are noise. */
  visibleSuggestions(): SuggestionEntry[] {
    return (this.state.item?.suggestion ?? []).filter(
      (entry) => entry.prob >= MIN_VISIBLE_PROB,
    );
  }

  setDraft(label: Label | null): void {
    this.update({ draft: label });
  }

  toggleTag(tag: number): void {
    const current = Array.isArray(this.state.draft) ? [...this.state.draft] : [];
    const at = current.indexOf(tag);
    if (at >= 0) current.splice(at, 1);
    else current.push(tag);
    current.sort((a, b) => a - b);
    this.update({ draft: current });
  }

  /** Fetch the server's pending item (or completion) and sync local state. */
  async refresh(): Promise<void> {
    try {
      const next = await this.api.next(this.sessionId);
      if (next.item === null) {
        this.update({
          phase: "done",
          item: null,
          draft: null,
          gauge: next.budget,
          banner: null,
        });
        return;
      }
      const sameItem = this.state.item?.item_id === next.item.item_id;
      this.update({
        phase: "awaiting",
        item: next.item,
        // a drafted label only survives while it is for the same item
        draft: sameItem ? this.state.draft : null,
        gauge: next.budget,
        banner: null,
      });
    } catch (err) {
      this.update({ banner: describe(err) });
    }
  }

  /** Submit the drafted label for the last-fetched item. */
  async submit(): Promise<boolean> {
    const { item, draft } = this.state;
    if (!item || draft === null) return false;
    if (Array.isArray(draft) && draft.length === 0) return false;
    try {
      const ack = await this.api.submitLabel(this.sessionId, item.item_id, draft);
      this.update({
        gauge: ack.budget,
        draft: null,
        item: null,
        phase: ack.status === "done" ? "done" : "loading",
        banner: null,
      });
      await this.refresh();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // out of sync with the server: drop the stale draft and resync
        this.update({ draft: null });
        await this.refresh();
        this.update({ banner: "out of sync with the server, item reloaded" });
        return false;
      }
      // network (or 5xx) trouble: keep the draft so nothing typed is lost
      this.update({ banner: `submit failed, draft kept - ${describe(err)}` });
      return false;
    }
  }

  async refreshMetrics(): Promise<void> {
    try {
      const metrics = await this.api.metrics(this.sessionId);
      const history = this.state.qualityHistory;
      const quality = metrics.quality_overall;
      this.update({
        metrics,
        qualityHistory:
          quality === null ? history : [...history.slice(-59), quality],
      });
    } catch (err) {
      this.update({ banner: describe(err) });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return err.message;
  return String(err);
}

export class PollTimer {
  private handle: ReturnType<typeof setInterval> | undefined;

  constructor(private readonly intervalMs = 1000) {}

  start(tick: () => Promise<void>): void {
    this.stop();
    this.handle = setInterval(() => {
      void tick().catch(() => {
        // keep polling; the controller surfaces errors through its banner
      });
    }, this.intervalMs);
  }

  stop(): void {
    if (this.handle !== undefined) {
      clearInterval(this.handle);
      this.handle = undefined;
    }
  }
}
