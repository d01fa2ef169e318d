// @vitest-environment happy-dom
/** Session-flow tests against the real mock-backed backend spawned by
 * global-setup: clarification dialog, client-side plan blocking, live
 * timeline, and citation popovers. */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { App } from '../src/app.js';

const BASE = process.env.IODEEP_TEST_BASE ?? 'http://127.0.0.1:8924';

function goodQuestion(): string {
  const synthDir = process.env.IODEEP_TEST_SYNTH;
  if (!synthDir) return 'What is the melting point of Zanfenbar?';
  const line = readFileSync(join(synthDir, 'task2.jsonl'), 'utf-8').split('\n')[0] ?? '';
  return (JSON.parse(line) as { question: string }).question;
}

async function until<T>(probe: () => T | null | undefined | false, timeoutMs = 20_000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = probe();
    if (value) return value;
    if (Date.now() > deadline) throw new Error('condition never became true');
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
}

function mount(): App {
  document.body.innerHTML = '<div id="app"></div>';
  return new App(document.getElementById('app') as HTMLElement, new ApiClient(BASE));
}

function queryInput(): HTMLInputElement {
  return document.querySelector('.query-form input') as HTMLInputElement;
}

describe('session flow against the mock-backed server', () => {
  beforeEach(() => {
    document.body.innerHTML = '';
  });

  it('disables submit for empty input', () => {
    mount();
    const button = document.querySelector('button.submit') as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    queryInput().value = 'something';
    queryInput().dispatchEvent(new Event('input'));
    expect(button.disabled).toBe(false);
  });

  it('shows the clarification dialog for an ambiguous query', async () => {
    const app = mount();
    queryInput().value = 'help';
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();

    const dialog = document.querySelector('.clarification') as HTMLElement;
    expect(dialog.hidden).toBe(false);
    expect(document.querySelector('.clarification .question')?.textContent).toContain('domain');
    const editor = document.querySelector('.plan-editor') as HTMLElement;
    expect(editor.hidden).toBe(true);
  });

  it('blocks invariant-violating plan edits client-side', async () => {
    const app = mount();
    queryInput().value = goodQuestion();
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();
    await until(() => !(document.querySelector('.plan-editor') as HTMLElement).hidden);

    // delete the write step: the confirm must never reach the server
    const writeRow = await until(() =>
      [...document.querySelectorAll('.plan-row')].find(
        (row) => (row.querySelector('select') as HTMLSelectElement).value === 'write',
      ),
    );
    (writeRow.querySelector('button.remove') as HTMLButtonElement).click();

    let confirmCalls = 0;
    const originalConfirm = app.client.confirm.bind(app.client);
    app.client.confirm = (...args) => {
      confirmCalls += 1;
      return originalConfirm(...args);
    };
    const outcome = await app.confirmPlan();
    expect(outcome).toBe('blocked');
    expect(confirmCalls).toBe(0);
    const problems = [...document.querySelectorAll('.plan-problems .problem')];
    expect(problems.some((p) => p.textContent?.includes('write step'))).toBe(true);
  });

  it('runs a confirmed session to report_ready and opens citation popovers', async () => {
    const app = mount();
    queryInput().value = goodQuestion();
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();
    await until(() => !(document.querySelector('.plan-editor') as HTMLElement).hidden);

    const outcome = await app.confirmPlan();
    expect(outcome).toBe('confirmed');

    // timeline terminates in report_ready
    await until(() => document.querySelector('.timeline-list .event-report_ready'));
    const kinds = [...document.querySelectorAll('.timeline-list li')].map(
      (li) => (li as HTMLElement).dataset.kind,
    );
    expect(kinds[0]).toBe('plan_proposed');
    expect(kinds).toContain('plan_confirmed');
    expect(kinds[kinds.length - 1]).toBe('report_ready');
    const seqs = [...document.querySelectorAll('.timeline-list li')].map((li) =>
      Number((li as HTMLElement).dataset.seq),
    );
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(new Set(seqs).size).toBe(seqs.length); // replay produced no duplicates

    // report renders with citation markers
    const marker = await until(() =>
      document.querySelector('.report-body button.citation'),
    ) as HTMLButtonElement;
    expect(marker.textContent).toMatch(/^\[\d+\]$/);

    // popover byte-matches GET /objects/{pid}
    marker.click();
    const popover = document.querySelector('.citation-popover') as HTMLElement;
    await until(() => !popover.hidden && popover.querySelector('.popover-pid'));
    const pidShown = popover.querySelector('.popover-pid')?.textContent ?? '';
    const titleShown = popover.querySelector('.popover-title')?.textContent ?? '';
    const response = await fetch(`${BASE}/objects/${pidShown}`);
    const object = ((await response.json()) as { object: { pid: string; explicit_meta: { title: string } } }).object;
    expect(pidShown).toBe(object.pid);
    expect(titleShown).toBe(object.explicit_meta.title);
  });

  it('shows the stale banner when the session was confirmed elsewhere', async () => {
    const app = mount();
    queryInput().value = goodQuestion();
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();
    await until(() => !(document.querySelector('.plan-editor') as HTMLElement).hidden);

    // another client confirms first
    await app.client.confirm(app.sessionId as string);
    const outcome = await app.confirmPlan();
    expect(outcome).toBe('stale');
    expect((document.querySelector('.stale-banner') as HTMLElement).hidden).toBe(false);
  });

  it('answers a clarification and proceeds to a plan', async () => {
    const app = mount();
    queryInput().value = 'help';
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();
    await until(() => !(document.querySelector('.clarification') as HTMLElement).hidden);

    (document.querySelector('.clarification input') as HTMLInputElement).value = goodQuestion();
    await app.answerClarification();
    await until(() => !(document.querySelector('.plan-editor') as HTMLElement).hidden);
    expect((document.querySelector('.clarification') as HTMLElement).hidden).toBe(true);
  });

  it('renders checker warnings panel only when findings arrive', async () => {
    const app = mount();
    queryInput().value = goodQuestion();
    queryInput().dispatchEvent(new Event('input'));
    await app.submitQuery();
    await until(() => !(document.querySelector('.plan-editor') as HTMLElement).hidden);
    await app.confirmPlan();
    await until(() => document.querySelector('.timeline-list .event-report_ready'));
    const warnings = document.querySelector('.warnings') as HTMLElement;
    const findings = document.querySelectorAll('.timeline-list .event-check_finding');
    expect(warnings.hidden).toBe(findings.length === 0);
  });
});
