// DOM rendering for the inspector. Kept as pure functions from state to
// element trees so the wiring in main.ts stays thin.

import { LlmDetails, PlanNode, ResultSet, TableInfo } from "./api.js";
import {
  BATCH_MODES,
  Comparison,
  InspectorState,
  SERIALIZATION_FORMATS,
  flattenPlan,
} from "./store.js";
import { DiffOp } from "./template.js";

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

export function renderTableList(
  tables: TableInfo[],
  selected: string | null,
  onSelect: (name: string) => void,
): HTMLElement {
  const items = tables.map((t) => {
    const item = el(
      "li",
      { class: t.name === selected ? "table-item selected" : "table-item" },
      [`${t.name} (${t.row_count})`],
    );
    item.addEventListener("click", () => onSelect(t.name));
    return item;
  });
  return el("ul", { class: "table-list" }, items);
}

export function renderGrid(result: ResultSet): HTMLElement {
  const head = el("tr", {}, result.columns.map((c) => el("th", {}, [`${c.name}`])));
  const body = result.rows.map((row) =>
    el(
      "tr",
      {},
      row.map((cell) =>
        el(
          "td",
          { class: cell === null ? "null-cell" : "" },
          [cell === null ? "NULL" : String(cell)],
        ),
      ),
    ),
  );
  return el("table", { class: "grid" }, [el("thead", {}, [head]), el("tbody", {}, body)]);
}

export function renderPlanTree(
  root: PlanNode,
  selectedNodeId: number | null,
  onSelect: (nodeId: number) => void,
): HTMLElement {
  const items = flattenPlan(root).map(({ node, depth }) => {
    const isLlm = node.llm_details !== undefined;
    const classes = ["plan-node"];
    if (isLlm) classes.push("llm-node");
    if (node.node_id === selectedNodeId) classes.push("selected");
    const label = node.detail
      ? `${node.kind} ${Object.values(node.detail).join(" ")}`
      : node.kind;
    const rows = node.rows !== undefined ? ` — ${node.rows} rows` : "";
    const item = el(
      "li",
      { class: classes.join(" "), style: `margin-left: ${depth * 16}px` },
      [label + rows],
    );
    item.addEventListener("click", () => onSelect(node.node_id));
    return item;
  });
  return el("ul", { class: "plan-tree" }, items);
}

export function renderLlmDetails(details: LlmDetails): HTMLElement {
  const facts: [string, string][] = [
    ["function", details.function],
    ["serialization format", details.serialization_format],
    ["batch mode", details.batch_mode],
    ["provider calls", String(details.provider_calls)],
    ["tuples sent", String(details.tuples_sent ?? 0)],
    ["cache hits", String(details.cache_hits)],
    ["effective batch sizes", (details.effective_batch_sizes ?? []).join(", ") || "—"],
    ["backoff attempts", (details.backoff_attempt_sizes ?? []).join(", ") || "—"],
  ];
  if (details.warnings && details.warnings.length > 0) {
    facts.push(["warnings", details.warnings.join("; ")]);
  }
  const rows = facts.map(([k, v]) =>
    el("tr", {}, [el("th", {}, [k]), el("td", {}, [v])]),
  );
  return el("div", { class: "llm-details" }, [
    el("table", { class: "facts" }, rows),
    el("h4", {}, ["meta prompt"]),
    el("pre", { class: "meta-prompt" }, [details.meta_prompt_full ?? ""]),
  ]);
}

export function renderComparison(comparison: Comparison): HTMLElement {
  const row = (label: string, sample: { wall_time: number; provider_calls: number }) =>
    el("tr", {}, [
      el("th", {}, [label]),
      el("td", {}, [`${sample.wall_time.toFixed(3)}s`]),
      el("td", {}, [`${sample.provider_calls} provider calls`]),
    ]);
  return el("div", { class: "comparison-card" }, [
    el("h4", {}, ["latency comparison"]),
    el("table", { class: "facts" }, [
      row("before", comparison.before),
      row("after", comparison.after),
    ]),
  ]);
}

export function renderDiff(ops: DiffOp[]): HTMLElement {
  const lines = ops.map((op) => {
    const prefix = op.kind === "added" ? "+ " : op.kind === "removed" ? "- " : "  ";
    return el("div", { class: `diff-line diff-${op.kind}` }, [prefix + op.text]);
  });
  return el("div", { class: "diff" }, lines);
}

export function renderControls(
  state: InspectorState,
  handlers: {
    onFormat: (format: string) => void;
    onBatch: (mode: string) => void;
    onTemplateToggle: (enabled: boolean) => void;
    onTemplate: (template: string) => void;
    onRerun: () => void;
  },
): HTMLElement {
  const formatSelect = el("select", { id: "format-select" });
  for (const fmt of SERIALIZATION_FORMATS) {
    const option = el("option", { value: fmt }, [fmt]) as HTMLOptionElement;
    option.selected = fmt === state.serializationFormat;
    formatSelect.append(option);
  }
  formatSelect.addEventListener("change", () =>
    handlers.onFormat((formatSelect as HTMLSelectElement).value),
  );

  const batchSelect = el("select", { id: "batch-select" });
  for (const mode of BATCH_MODES) {
    const option = el("option", { value: mode }, [mode]) as HTMLOptionElement;
    option.selected = mode === state.batchMode;
    batchSelect.append(option);
  }
  batchSelect.addEventListener("change", () =>
    handlers.onBatch((batchSelect as HTMLSelectElement).value),
  );

  const toggle = el("input", { type: "checkbox", id: "template-toggle" }) as HTMLInputElement;
  toggle.checked = state.templateEnabled;
  toggle.addEventListener("change", () => handlers.onTemplateToggle(toggle.checked));

  const editor = el("textarea", {
    id: "template-editor",
    rows: "6",
  }) as HTMLTextAreaElement;
  editor.value = state.template;
  editor.disabled = !state.templateEnabled;
  editor.addEventListener("input", () => handlers.onTemplate(editor.value));

  const problems = el(
    "div",
    { class: "template-problems" },
    state.templateProblems.map((p) => el("div", { class: "problem" }, [p])),
  );

  const rerun = el("button", { id: "rerun-button" }, ["re-run with overrides"]);
  rerun.addEventListener("click", handlers.onRerun);

  return el("div", { class: "controls" }, [
    el("label", {}, ["format ", formatSelect]),
    el("label", {}, ["batch ", batchSelect]),
    el("label", {}, [toggle, " custom template"]),
    editor,
    problems,
    rerun,
  ]);
}
