// Entry point: wires the store to the page and re-renders on every change.

import { ApiClient, FetchLike } from "./api.js";
import {
  renderComparison,
  renderControls,
  renderDiff,
  renderGrid,
  renderLlmDetails,
  renderPlanTree,
  renderTableList,
} from "./render.js";
import { InspectorStore } from "./store.js";

export function mount(root: HTMLElement, store: InspectorStore): void {
  root.innerHTML = `
    <header><h1>flock inspector</h1></header>
    <main>
      <aside id="sidebar">
        <h3>tables</h3>
        <div id="table-list"></div>
        <div id="preview"></div>
      </aside>
      <section id="workbench">
        <div class="ask-row">
          <input id="question" type="text" placeholder="ask a question in plain language" />
          <button id="ask-button">ask</button>
        </div>
        <div id="generated-sql"></div>
        <textarea id="sql" rows="4" placeholder="or write SQL directly"></textarea>
        <button id="run-button">run</button>
        <div id="error" class="error"></div>
        <div id="message"></div>
        <div id="results"></div>
      </section>
      <section id="inspector">
        <h3>plan</h3>
        <div id="plan"></div>
        <div id="node-details"></div>
        <div id="controls"></div>
        <div id="diff"></div>
        <div id="comparison"></div>
      </section>
    </main>
  `;

  const question = root.querySelector("#question") as HTMLInputElement;
  const sql = root.querySelector("#sql") as HTMLTextAreaElement;

  question.addEventListener("input", () => store.setQuestion(question.value));
  sql.addEventListener("input", () => store.setSql(sql.value));
  (root.querySelector("#ask-button") as HTMLElement).addEventListener("click", () =>
    void store.ask(),
  );
  (root.querySelector("#run-button") as HTMLElement).addEventListener("click", () =>
    void store.runSql(),
  );

  const replace = (selector: string, node: Node | null) => {
    const host = root.querySelector(selector) as HTMLElement;
    host.innerHTML = "";
    if (node) host.append(node);
  };

  const render = () => {
    const state = store.state;
    replace(
      "#table-list",
      renderTableList(state.tables, state.selectedTable, (name) => void store.selectTable(name)),
    );
    replace("#preview", state.preview ? renderGrid(state.preview) : null);
    if (sql.value !== state.sql) sql.value = state.sql;

    const generated = root.querySelector("#generated-sql") as HTMLElement;
    generated.textContent = state.generatedSql ? `generated: ${state.generatedSql}` : "";

    (root.querySelector("#error") as HTMLElement).textContent = state.error ?? "";
    (root.querySelector("#message") as HTMLElement).textContent = state.message ?? "";
    replace("#results", state.result ? renderGrid(state.result) : null);
    replace(
      "#plan",
      state.plan
        ? renderPlanTree(state.plan.nodes, state.selectedNodeId, (id) => store.selectNode(id))
        : null,
    );
    const node = store.selectedNode();
    replace("#node-details", node?.llm_details ? renderLlmDetails(node.llm_details) : null);
    replace(
      "#controls",
      state.plan
        ? renderControls(state, {
            onFormat: (f) => store.setSerializationFormat(f),
            onBatch: (m) => store.setBatchMode(m),
            onTemplateToggle: (enabled) => store.setTemplateEnabled(enabled),
            onTemplate: (t) => store.setTemplate(t),
            onRerun: () => void store.rerun(),
          })
        : null,
    );
    replace("#diff", state.templateEnabled ? renderDiff(store.templateDiff()) : null);
    replace("#comparison", state.comparison ? renderComparison(state.comparison) : null);
    root.classList.toggle("busy", state.busy);
  };

  store.subscribe(render);
  render();
  void store.loadTables();
}

declare const window: { fetch: FetchLike; document: Document } & Record<string, unknown>;

if (typeof document !== "undefined" && document.getElementById("app")) {
  const api = new ApiClient((url, init) => window.fetch(url, init));
  mount(document.getElementById("app") as HTMLElement, new InspectorStore(api));
}
