// Prompt-template helpers: placeholder validation mirroring the server's
// rules, and a line diff for the before/after template view.

export const ALLOWED_PLACEHOLDERS = ["user_prompt", "tuples", "contract"];

const PLACEHOLDER = /\{\{\s*(\w+)\s*\}\}/g;

export interface TemplateCheck {
  valid: boolean;
  problems: string[];
  placeholders: string[];
}

export function validateTemplate(template: string): TemplateCheck {
  const names: string[] = [];
  for (const match of template.matchAll(PLACEHOLDER)) {
    names.push(match[1]);
  }
  const problems: string[] = [];
  const unknown = [...new Set(names.filter((n) => !ALLOWED_PLACEHOLDERS.includes(n)))];
  if (unknown.length > 0) {
    problems.push(`unknown placeholders: ${unknown.sort().join(", ")}`);
  }
  if (!names.includes("tuples")) {
    problems.push("template must include the {{tuples}} placeholder");
  }
  return { valid: problems.length === 0, problems, placeholders: names };
}

export type DiffOp = { kind: "same" | "added" | "removed"; text: string };

// Longest-common-subsequence line diff; small inputs only (prompt templates).
export function diffLines(before: string, after: string): DiffOp[] {
  const a = before.split("\n");
  const b = after.split("\n");
  const lcs: number[][] = Array.from({ length: a.length + 1 }, () =>
    new Array<number>(b.length + 1).fill(0),
  );
  for (let i = a.length - 1; i >= 0; i--) {
    for (let j = b.length - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j] ? lcs[i + 1][j + 1] + 1 : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  const ops: DiffOp[] = [];
  let i = 0;
  let j = 0;
  while (i < a.length && j < b.length) {
    if (a[i] === b[j]) {
      ops.push({ kind: "same", text: a[i] });
      i++;
      j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      ops.push({ kind: "removed", text: a[i] });
      i++;
    } else {
      ops.push({ kind: "added", text: b[j] });
      j++;
    }
  }
  while (i < a.length) ops.push({ kind: "removed", text: a[i++] });
  while (j < b.length) ops.push({ kind: "added", text: b[j++] });
  return ops;
}
