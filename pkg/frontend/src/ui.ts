// DOM layer: renders controller state, forwards clicks back to it.
//
// Deliberately dumb: every displayed number comes straight out of the
// controller's server-fed state.  Suggestions are shown but never
// pre-select anything; the human must click a label to enable submit.

import type { SessionController } from "./controller.js";
import type { ControllerState } from "./controller.js";

const SPARK_GLYPHS = "▁▂▃▄▅▆▇█";

export function sparkline(values: number[], lo = 0, hi = 1): string {
  if (values.length === 0) return "";
  const span = hi - lo || 1;
  return values
    .map((v) => {
      const idx = Math.min(
        SPARK_GLYPHS.length - 1,
        Math.max(0, Math.floor(((v - lo) / span) * SPARK_GLYPHS.length)),
      );
      return SPARK_GLYPHS[idx];
    })
    .join("");
}

export function mount(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = `
    <div class="session">
      <div data-testid="banner" class="banner" hidden></div>
      <div class="gauge">
        budget <span data-testid="gauge-text">-</span>
        <div class="bar"><div data-testid="gauge-fill" class="fill"></div></div>
      </div>
      <div data-testid="item-panel">
        <h2 data-testid="item-id"></h2>
        <p data-testid="item-text"></p>
        <div>
          <h3>model suggestion</h3>
          <ul data-testid="suggestions"></ul>
        </div>
        <div data-testid="label-input"></div>
        <input data-testid="tag-search" placeholder="filter tags" hidden />
        <button data-testid="submit" disabled>submit label</button>
      </div>
      <div data-testid="done-panel" hidden>session complete</div>
      <div class="stats">
        <span data-testid="counts"></span>
        <span data-testid="quality"></span>
        <span data-testid="sparkline"></span>
      </div>
    </div>`;

  const el = <T extends HTMLElement>(id: string): T => {
    const found = root.querySelector<T>(`[data-testid="${id}"]`);
    if (!found) throw new Error(`missing element ${id}`);
    return found;
  };

  const submitButton = el<HTMLButtonElement>("submit");
  submitButton.addEventListener("click", () => {
    void controller.submit();
  });

  const tagSearch = el<HTMLInputElement>("tag-search");
  tagSearch.addEventListener("input", () => render(controller.getState()));

  function renderLabelInput(state: ControllerState): void {
    const host = el<HTMLDivElement>("label-input");
    host.innerHTML = "";
    const task = controller.task;
    if (task.task_kind === "multilabel") {
      tagSearch.hidden = false;
      const filter = tagSearch.value.trim();
      const selected = new Set(Array.isArray(state.draft) ? state.draft : []);
      for (let tag = 0; tag < task.num_classes; tag += 1) {
        const name = `tag ${tag}`;
        if (filter && !name.includes(filter)) continue;
        const label = document.createElement("label");
        const box = document.createElement("input");
        box.type = "checkbox";
        box.checked = selected.has(tag);
        box.dataset.tag = String(tag);
        box.addEventListener("change", () => controller.toggleTag(tag));
        label.appendChild(box);
        label.appendChild(document.createTextNode(name));
        host.appendChild(label);
      }
      return;
    }
    tagSearch.hidden = true;
    for (let cls = 0; cls < task.num_classes; cls += 1) {
      const button = document.createElement("button");
      button.dataset.class = String(cls);
      button.textContent =
        task.task_kind === "binary" ? (cls === 0 ? "negative (0)" : "positive (1)") : `class ${cls}`;
      button.classList.toggle("selected", state.draft === cls);
      button.addEventListener("click", () => controller.setDraft(cls));
      host.appendChild(button);
    }
  }

  function render(state: ControllerState): void {
    const banner = el<HTMLDivElement>("banner");
    banner.hidden = state.banner === null;
    banner.textContent = state.banner ?? "";

    if (state.gauge) {
      el("gauge-text").textContent = `${state.gauge.used}/${state.gauge.total}`;
      el("gauge-fill").style.width =
        state.gauge.total > 0
          ? `${(100 * state.gauge.used) / state.gauge.total}%`
          : "0%";
    }

    const itemPanel = el("item-panel");
    const donePanel = el("done-panel");
    itemPanel.hidden = state.phase !== "awaiting";
    donePanel.hidden = state.phase !== "done";

    if (state.item) {
      el("item-id").textContent = state.item.item_id;
      el("item-text").textContent = state.item.text ?? "(no display text)";
      const list = el<HTMLUListElement>("suggestions");
      list.innerHTML = "";
      for (const entry of controller.visibleSuggestions()) {
        const li = document.createElement("li");
        li.textContent = `class ${entry.class}: ${(100 * entry.prob).toFixed(1)}%`;
        list.appendChild(li);
      }
      renderLabelInput(state);
    }

    const hasDraft =
      state.draft !== null && (!Array.isArray(state.draft) || state.draft.length > 0);
    submitButton.disabled = state.phase !== "awaiting" || !hasDraft;

    if (state.metrics) {
      const c = state.metrics.counts;
      el("counts").textContent =
        `human ${c.human} | model ${c.model} | re-allocated ${c.reallocated} | re-annotated ${c.reannotated}`;
      el("quality").textContent =
        state.metrics.quality_overall === null
          ? ""
          : `overall quality ${(100 * state.metrics.quality_overall).toFixed(1)}%`;
    }
    el("sparkline").textContent = sparkline(state.qualityHistory);
  }

  controller.onChange(render);
  render(controller.getState());
}
