// View-model for the inspector. Pure state + actions over the ApiClient;
// no DOM access, so the whole thing is testable against a faked API.

import {
  ApiClient,
  LatencySample,
  PlanExport,
  PlanNode,
  RequestFailed,
  ResultSet,
  TableInfo,
} from "./api.js";
import { DiffOp, diffLines, validateTemplate } from "./template.js";

export const SERIALIZATION_FORMATS = ["XML", "JSON", "MARKDOWN"] as const;

export const BATCH_MODES = ["Auto", "Manual(1)", "Manual(10)", "Manual(50)", "Manual(100)"];

// Editable starting point equivalent to the server's built-in layout.
export const DEFAULT_TEMPLATE = ["{{user_prompt}}", "{{contract}}", "{{tuples}}"].join("\n");

export interface Comparison {
  before: LatencySample;
  after: LatencySample;
}

export interface InspectorState {
  tables: TableInfo[];
  selectedTable: string | null;
  preview: ResultSet | null;
  question: string;
  sql: string;
  generatedSql: string | null;
  result: ResultSet | null;
  message: string | null;
  plan: PlanExport | null;
  selectedNodeId: number | null;
  serializationFormat: string;
  batchMode: string;
  template: string;
  templateEnabled: boolean;
  templateProblems: string[];
  comparison: Comparison | null;
  error: string | null;
  busy: boolean;
}

export function initialState(): InspectorState {
  return {
    tables: [],
    selectedTable: null,
    preview: null,
    question: "",
    sql: "",
    generatedSql: null,
    result: null,
    message: null,
    plan: null,
    selectedNodeId: null,
    serializationFormat: "XML",
    batchMode: "Auto",
    template: DEFAULT_TEMPLATE,
    templateEnabled: false,
    templateProblems: [],
    comparison: null,
    error: null,
    busy: false,
  };
}

export function flattenPlan(node: PlanNode, depth = 0): { node: PlanNode; depth: number }[] {
  const out = [{ node, depth }];
  for (const child of node.children ?? []) {
    out.push(...flattenPlan(child, depth + 1));
  }
  return out;
}

export function findNode(root: PlanNode, nodeId: number): PlanNode | null {
  for (const { node } of flattenPlan(root)) {
    if (node.node_id === nodeId) return node;
  }
  return null;
}

export function llmNodeIds(root: PlanNode): number[] {
  return flattenPlan(root)
    .filter(({ node }) => node.llm_details !== undefined)
    .map(({ node }) => node.node_id);
}

export class InspectorStore {
  state: InspectorState = initialState();
  private listeners: (() => void)[] = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  private update(patch: Partial<InspectorState>): void {
    this.state = { ...this.state, ...patch };
    this.emit();
  }

  private async guarded(work: () => Promise<Partial<InspectorState>>): Promise<void> {
    this.update({ busy: true, error: null });
    try {
      const patch = await work();
      this.update({ ...patch, busy: false });
    } catch (err) {
      const message =
        err instanceof RequestFailed
          ? formatApiError(err)
          : err instanceof Error
            ? err.message
            : String(err);
      this.update({ busy: false, error: message });
    }
  }

  async loadTables(): Promise<void> {
    await this.guarded(async () => {
      const { tables } = await this.api.tables();
      return { tables };
    });
  }

  async selectTable(name: string): Promise<void> {
    await this.guarded(async () => {
      const preview = await this.api.preview(name);
      return { selectedTable: name, preview };
    });
  }

  setQuestion(question: string): void {
    this.update({ question });
  }

  setSql(sql: string): void {
    this.update({ sql });
  }

  overrides(): { batch_mode?: string; serialization_format?: string; prompt_template?: string } {
    const out: { batch_mode?: string; serialization_format?: string; prompt_template?: string } =
      {};
    if (this.state.batchMode !== "Auto") out.batch_mode = this.state.batchMode;
    if (this.state.serializationFormat !== "XML") {
      out.serialization_format = this.state.serializationFormat;
    }
    if (this.state.templateEnabled) out.prompt_template = this.state.template;
    return out;
  }

  async ask(): Promise<void> {
    const question = this.state.question.trim();
    if (!question) {
      this.update({ error: "enter a question first" });
      return;
    }
    await this.guarded(async () => {
      const response = await this.api.ask(question);
      const plan = response.plan_id ? await this.api.plan(response.plan_id) : null;
      return {
        generatedSql: response.generated_sql,
        sql: response.generated_sql,
        result: pickResult(response),
        message: null,
        plan,
        selectedNodeId: plan ? llmNodeIds(plan.nodes)[0] ?? null : null,
        comparison: null,
      };
    });
  }

  async runSql(): Promise<void> {
    const sql = this.state.sql.trim();
    if (!sql) {
      this.update({ error: "enter a SQL statement first" });
      return;
    }
    await this.guarded(async () => {
      const overrides = this.overrides();
      const response = await this.api.query(
        sql,
        Object.keys(overrides).length > 0 ? overrides : undefined,
      );
      if (!response.plan_id) {
        return { result: null, plan: null, message: response.message ?? "ok", comparison: null };
      }
      const plan = await this.api.plan(response.plan_id);
      return {
        result: pickResult(response),
        message: null,
        generatedSql: null,
        plan,
        selectedNodeId: llmNodeIds(plan.nodes)[0] ?? null,
        comparison: null,
      };
    });
  }

  selectNode(nodeId: number): void {
    this.update({ selectedNodeId: nodeId });
  }

  selectedNode(): PlanNode | null {
    if (!this.state.plan || this.state.selectedNodeId === null) return null;
    return findNode(this.state.plan.nodes, this.state.selectedNodeId);
  }

  setSerializationFormat(format: string): void {
    this.update({ serializationFormat: format });
  }

  setBatchMode(mode: string): void {
    this.update({ batchMode: mode });
  }

  setTemplate(template: string): void {
    const check = validateTemplate(template);
    this.update({ template, templateProblems: check.valid ? [] : check.problems });
  }

  setTemplateEnabled(enabled: boolean): void {
    const problems = enabled ? validateTemplate(this.state.template).problems : [];
    this.update({ templateEnabled: enabled, templateProblems: problems });
  }

  templateDiff(): DiffOp[] {
    return diffLines(DEFAULT_TEMPLATE, this.state.template);
  }

  async rerun(): Promise<void> {
    const plan = this.state.plan;
    if (!plan) {
      this.update({ error: "run a query first" });
      return;
    }
    if (this.state.templateEnabled && this.state.templateProblems.length > 0) {
      this.update({ error: `template invalid: ${this.state.templateProblems.join("; ")}` });
      return;
    }
    await this.guarded(async () => {
      const response = await this.api.rerun(plan.plan_id, this.overrides());
      const newPlan = response.plan_id ? await this.api.plan(response.plan_id) : null;
      return {
        result: pickResult(response),
        comparison: response.latency_comparison,
        plan: newPlan ?? plan,
        selectedNodeId: newPlan ? llmNodeIds(newPlan.nodes)[0] ?? null : this.state.selectedNodeId,
      };
    });
  }
}

function pickResult(body: ResultSet): ResultSet {
  return { columns: body.columns, rows: body.rows, row_count: body.row_count };
}

function formatApiError(err: RequestFailed): string {
  const position =
    err.error.line !== undefined ? ` (line ${err.error.line}, column ${err.error.column})` : "";
  return `${err.error.code}: ${err.error.message}${position}`;
}
