/** Plan editor model and the client-side invariants enforced before any
 * confirm request is sent: at most 8 steps, exactly one write step (last),
 * dependencies only on earlier steps, search steps carry query text. */

import type { PlanRecord, StepRecord } from './api.js';

export const MAX_STEPS = 8;

export interface PlanRow {
  id: string;
  kind: 'search' | 'action' | 'write';
  description: string;
  queryText: string;
  dependsOn: string[];
}

export function rowsFromPlan(plan: PlanRecord): PlanRow[] {
  return plan.steps.map((step) => ({
    id: step.id,
    kind: step.kind,
    description: step.description,
    queryText: step.payload?.text ?? '',
    dependsOn: [...(step.depends_on ?? [])],
  }));
}

export function rowsToSteps(rows: PlanRow[]): StepRecord[] {
  return rows.map((row) => ({
    id: row.id,
    kind: row.kind,
    description: row.description,
    payload:
      row.kind === 'search'
        ? { text: row.queryText, tier: 'chunk', strategy: 'hybrid', top_k: 10 }
        : null,
    depends_on: [...row.dependsOn],
  }));
}

/** Returns human-readable violations; an empty list means the plan may be
 * submitted. Mirrors the server's invariants so bad edits never leave the
 * browser. */
export function validateRows(rows: PlanRow[]): string[] {
  const problems: string[] = [];
  if (rows.length < 1 || rows.length > MAX_STEPS) {
    problems.push(`a plan needs 1 to ${MAX_STEPS} steps (got ${rows.length})`);
  }
  const writing = rows.filter((row) => row.kind === 'write');
  if (writing.length !== 1 || rows[rows.length - 1]?.kind !== 'write') {
    problems.push('the plan must end with exactly one write step');
  }
  const ids = rows.map((row) => row.id);
  if (new Set(ids).size !== ids.length) {
    problems.push('step ids must be unique');
  }
  const seen = new Set<string>();
  for (const row of rows) {
    if (!row.id.trim()) {
      problems.push('every step needs an id');
    }
    for (const dep of row.dependsOn) {
      if (!seen.has(dep)) {
        problems.push(`step ${row.id} depends on ${dep}, which is not an earlier step`);
      }
    }
    if (row.kind === 'search' && !row.queryText.trim()) {
      problems.push(`search step ${row.id} needs query text`);
    }
    seen.add(row.id);
  }
  return problems;
}

export function nextStepId(rows: PlanRow[]): string {
  let n = rows.length + 1;
  const taken = new Set(rows.map((row) => row.id));
  while (taken.has(`s${n}`)) {
    n += 1;
  }
  return `s${n}`;
}
