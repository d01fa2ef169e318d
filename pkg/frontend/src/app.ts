/** Page wiring: query form, clarification dialog, plan editor, live
 * timeline, and the cited report view with citation popovers. All mutations
 * go through POST /sessions, /clarify, /confirm; everything else is reads. */

import { ApiClient, ApiError } from './api.js';
import type { CitationRecord, EventRecord, PlanRecord, SessionRecord } from './api.js';
import { renderMarkdown } from './markdown.js';
import { nextStepId, rowsFromPlan, rowsToSteps, validateRows } from './plan.js';
import type { PlanRow } from './plan.js';
import { streamEvents } from './sse.js';

const EVENT_LABELS: Record<string, string> = {
  plan_proposed: 'plan proposed',
  clarification_needed: 'clarification needed',
  plan_confirmed: 'plan confirmed',
  step_started: 'step started',
  step_completed: 'step completed',
  check_finding: 'checker finding',
  report_ready: 'report ready',
  failed: 'failed',
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly client: ApiClient;
  private readonly root: HTMLElement;

  sessionId: string | null = null;
  private rows: PlanRow[] = [];
  private citations: CitationRecord[] = [];
  private lastSeq = 0;
  private streamAbort: AbortController | null = null;

  // view nodes
  private queryInput!: HTMLInputElement;
  private submitButton!: HTMLButtonElement;
  private retryBanner!: HTMLElement;
  private sessionView!: HTMLElement;
  private stateBadge!: HTMLElement;
  private clarificationBox!: HTMLElement;
  private clarificationQuestion!: HTMLElement;
  private clarificationInput!: HTMLInputElement;
  private planBox!: HTMLElement;
  private planTable!: HTMLElement;
  private planProblems!: HTMLElement;
  private serverReason!: HTMLElement;
  private staleBanner!: HTMLElement;
  private timelineList!: HTMLOListElement;
  private warningsBox!: HTMLElement;
  private warningsList!: HTMLUListElement;
  private reportBox!: HTMLElement;
  private reportBody!: HTMLElement;
  private popover!: HTMLElement;

  constructor(root: HTMLElement, client: ApiClient) {
    this.root = root;
    this.client = client;
    this.buildSkeleton();
  }

  // -- skeleton -----------------------------------------------------------

  private buildSkeleton() {
    this.root.replaceChildren();
    const header = el('header');
    header.append(el('h1', 'title', 'iodeep research'));
    this.root.append(header);

    const form = el('section', 'query-form');
    this.queryInput = el('input') as HTMLInputElement;
    this.queryInput.placeholder = 'Ask a question or name a report topic';
    this.queryInput.addEventListener('input', () => this.syncSubmitState());
    this.queryInput.addEventListener('keydown', (event) => {
      if (event.key === 'Enter' && !this.submitButton.disabled) void this.submitQuery();
    });
    this.submitButton = el('button', 'submit', 'Start research') as HTMLButtonElement;
    this.submitButton.disabled = true;
    this.submitButton.addEventListener('click', () => void this.submitQuery());
    form.append(this.queryInput, this.submitButton);
    this.root.append(form);

    this.retryBanner = el('div', 'banner retry-banner');
    this.retryBanner.hidden = true;
    const retryButton = el('button', '', 'Retry');
    retryButton.addEventListener('click', () => void this.submitQuery());
    this.retryBanner.append(el('span', '', 'Server unreachable. '), retryButton);
    this.root.append(this.retryBanner);

    this.sessionView = el('section', 'session');
    this.sessionView.hidden = true;

    this.stateBadge = el('div', 'state-badge');

    this.clarificationBox = el('div', 'clarification');
    this.clarificationBox.hidden = true;
    this.clarificationQuestion = el('p', 'question');
    this.clarificationInput = el('input') as HTMLInputElement;
    this.clarificationInput.placeholder = 'Your answer';
    const clarifyButton = el('button', 'answer', 'Answer');
    clarifyButton.addEventListener('click', () => void this.answerClarification());
    this.clarificationBox.append(
      el('h2', '', 'The planner needs more detail'),
      this.clarificationQuestion,
      this.clarificationInput,
      clarifyButton,
    );

    this.planBox = el('div', 'plan-editor');
    this.planBox.hidden = true;
    this.planTable = el('div', 'plan-rows');
    this.planProblems = el('ul', 'plan-problems');
    this.serverReason = el('div', 'server-reason');
    this.serverReason.hidden = true;
    const addButton = el('button', 'add-step', 'Add search step');
    addButton.addEventListener('click', () => {
      this.rows.splice(this.rows.length - 1, 0, {
        id: nextStepId(this.rows),
        kind: 'search',
        description: 'Additional search',
        queryText: '',
        dependsOn: [],
      });
      this.renderPlanRows();
    });
    const confirmButton = el('button', 'confirm', 'Confirm plan');
    confirmButton.addEventListener('click', () => void this.confirmPlan());
    this.planBox.append(
      el('h2', '', 'Review the plan'),
      this.planTable,
      this.planProblems,
      this.serverReason,
      addButton,
      confirmButton,
    );

    this.staleBanner = el('div', 'banner stale-banner');
    this.staleBanner.hidden = true;
    const refreshButton = el('button', '', 'Refresh');
    refreshButton.addEventListener('click', () => void this.refreshSession());
    this.staleBanner.append(el('span', '', 'Session state changed elsewhere. '), refreshButton);

    const timelineBox = el('div', 'timeline');
    timelineBox.append(el('h2', '', 'Progress'));
    this.timelineList = el('ol', 'timeline-list') as HTMLOListElement;
    timelineBox.append(this.timelineList);

    this.warningsBox = el('div', 'warnings');
    this.warningsBox.hidden = true;
    this.warningsBox.append(el('h2', '', 'Checker warnings'));
    this.warningsList = el('ul', 'warnings-list') as HTMLUListElement;
    this.warningsBox.append(this.warningsList);

    this.reportBox = el('div', 'report');
    this.reportBox.hidden = true;
    this.reportBody = el('article', 'report-body');
    this.reportBox.append(this.reportBody);
    this.reportBody.addEventListener('click', (event) => {
      const target = event.target as HTMLElement;
      if (target.classList.contains('citation')) {
        void this.showCitation(Number(target.dataset.marker));
      }
    });

    this.popover = el('div', 'citation-popover');
    this.popover.hidden = true;

    this.sessionView.append(
      this.stateBadge,
      this.staleBanner,
      this.clarificationBox,
      this.planBox,
      timelineBox,
      this.warningsBox,
      this.reportBox,
      this.popover,
    );
    this.root.append(this.sessionView);
  }

  private syncSubmitState() {
    this.submitButton.disabled = !this.queryInput.value.trim();
  }

  /** Fire-and-forget wrapper: background work must never surface as an
   * unhandled rejection (e.g. fetches aborted by page teardown). */
  private background(task: Promise<unknown>) {
    task.catch((error) => console.warn('background task failed:', error));
  }

  // -- session flow ---------------------------------------------------------

  async submitQuery(): Promise<void> {
    const query = this.queryInput.value.trim();
    if (!query) return;
    this.retryBanner.hidden = true;
    let sessionId: string;
    try {
      ({ session_id: sessionId } = await this.client.createSession(query));
    } catch (error) {
      if (error instanceof ApiError) throw error;
      this.retryBanner.hidden = false; // transport failure: offer retry
      return;
    }
    this.sessionId = sessionId;
    this.lastSeq = 0;
    this.timelineList.replaceChildren();
    this.warningsList.replaceChildren();
    this.warningsBox.hidden = true;
    this.reportBox.hidden = true;
    await this.refreshSession();
    this.startStream();
  }

  async refreshSession(): Promise<void> {
    if (!this.sessionId) return;
    const record = await this.client.getSession(this.sessionId);
    this.staleBanner.hidden = true;
    this.renderSession(record);
  }

  renderSession(record: SessionRecord): void {
    this.sessionView.hidden = false;
    this.stateBadge.textContent = `session ${record.session_id.slice(0, 8)} — ${record.state}`;
    this.stateBadge.dataset.state = record.state;
    for (const event of record.events) {
      this.applyEvent(event.seq, event.kind, event.payload);
    }
    if (record.clarification && record.state === 'awaiting_user') {
      this.clarificationQuestion.textContent = record.clarification.question;
      this.clarificationBox.hidden = false;
      this.planBox.hidden = true;
    } else if (record.plan && record.state === 'awaiting_user') {
      this.clarificationBox.hidden = true;
      this.showPlanEditor(record.plan);
    } else {
      this.clarificationBox.hidden = true;
      this.planBox.hidden = true;
    }
    if (record.report) {
      this.citations = record.report.citations;
    }
  }

  showPlanEditor(plan: PlanRecord): void {
    this.rows = rowsFromPlan(plan);
    this.serverReason.hidden = true;
    this.planBox.hidden = false;
    this.renderPlanRows();
  }

  private renderPlanRows() {
    this.planTable.replaceChildren();
    this.rows.forEach((row, index) => {
      const rowEl = el('div', 'plan-row');
      rowEl.dataset.stepId = row.id;

      const kind = el('select') as HTMLSelectElement;
      for (const value of ['search', 'action', 'write']) {
        const option = el('option', '', value) as HTMLOptionElement;
        option.value = value;
        kind.append(option);
      }
      kind.value = row.kind;
      kind.addEventListener('change', () => {
        row.kind = kind.value as PlanRow['kind'];
        this.renderValidation();
      });

      const description = el('input', 'description') as HTMLInputElement;
      description.value = row.description;
      description.addEventListener('input', () => {
        row.description = description.value;
      });

      const query = el('input', 'query-text') as HTMLInputElement;
      query.placeholder = 'query text (search steps)';
      query.value = row.queryText;
      query.addEventListener('input', () => {
        row.queryText = query.value;
        this.renderValidation();
      });

      const depends = el('input', 'depends-on') as HTMLInputElement;
      depends.placeholder = 'depends on (comma-separated ids)';
      depends.value = row.dependsOn.join(',');
      depends.addEventListener('input', () => {
        row.dependsOn = depends.value
          .split(',')
          .map((part) => part.trim())
          .filter(Boolean);
        this.renderValidation();
      });

      const remove = el('button', 'remove', 'Remove');
      remove.addEventListener('click', () => {
        this.rows.splice(index, 1);
        this.renderPlanRows();
      });

      rowEl.append(el('span', 'step-id', row.id), kind, description, query, depends, remove);
      this.planTable.append(rowEl);
    });
    this.renderValidation();
  }

  renderValidation(): string[] {
    const problems = validateRows(this.rows);
    this.planProblems.replaceChildren(
      ...problems.map((problem) => el('li', 'problem', problem)),
    );
    return problems;
  }

  /** Confirm the edited plan; invariant violations never leave the client. */
  async confirmPlan(): Promise<'blocked' | 'confirmed' | 'rejected' | 'stale'> {
    if (!this.sessionId) return 'blocked';
    const problems = this.renderValidation();
    if (problems.length > 0) {
      return 'blocked';
    }
    try {
      await this.client.confirm(this.sessionId, rowsToSteps(this.rows));
    } catch (error) {
      if (error instanceof ApiError && error.status === 400) {
        this.serverReason.textContent = error.detail; // keep edits on screen
        this.serverReason.hidden = false;
        return 'rejected';
      }
      if (error instanceof ApiError && error.status === 409) {
        this.staleBanner.hidden = false;
        return 'stale';
      }
      throw error;
    }
    this.planBox.hidden = true;
    await this.refreshSession();
    return 'confirmed';
  }

  async answerClarification(): Promise<void> {
    if (!this.sessionId) return;
    const answer = this.clarificationInput.value.trim();
    if (!answer) return;
    await this.client.clarify(this.sessionId, answer);
    this.clarificationInput.value = '';
    await this.refreshSession();
  }

  // -- events and report ------------------------------------------------------

  startStream(): void {
    if (!this.sessionId) return;
    this.streamAbort?.abort();
    this.streamAbort = new AbortController();
    this.background(streamEvents(this.client.eventsUrl(this.sessionId), {
      lastEventId: this.lastSeq,
      signal: this.streamAbort.signal,
      onEvent: (event) => {
        const data = event.data as { kind: string; payload: Record<string, unknown> };
        this.applyEvent(event.id, data.kind ?? event.event, data.payload ?? {});
      },
    }));
  }

  private applyEvent(seq: number, kind: string, payload: Record<string, unknown>) {
    if (seq <= this.lastSeq) return; // replayed event already shown
    this.lastSeq = seq;
    const item = el('li', `event event-${kind}`);
    item.dataset.seq = String(seq);
    item.dataset.kind = kind;
    let detail = '';
    if (kind === 'step_started' || kind === 'step_completed') {
      detail = ` ${String(payload['step_id'] ?? '')}`;
      if (kind === 'step_completed') {
        detail += ` (accepted ${String(payload['accepted'] ?? 0)})`;
      }
    } else if (kind === 'failed') {
      detail = ` ${String(payload['error'] ?? '')}`;
    }
    item.textContent = `${seq}. ${EVENT_LABELS[kind] ?? kind}${detail}`;
    this.timelineList.append(item);

    if (kind === 'check_finding') {
      this.warningsBox.hidden = false;
      this.warningsList.append(
        el('li', 'warning', `${String(payload['status'])}: ${String(payload['claim'])}`),
      );
    }
    if (kind === 'report_ready') {
      this.background(this.loadReport());
    }
    if (kind === 'plan_proposed' || kind === 'clarification_needed') {
      this.background(this.refreshSession());
    }
  }

  async loadReport(): Promise<void> {
    if (!this.sessionId) return;
    const record = await this.client.getSession(this.sessionId);
    this.citations = record.report?.citations ?? [];
    this.stateBadge.textContent = `session ${record.session_id.slice(0, 8)} — ${record.state}`;
    const markdown = await this.client.reportMarkdown(this.sessionId);
    this.reportBody.innerHTML = renderMarkdown(markdown);
    this.reportBox.hidden = false;
  }

  /** Open the citation popover; data comes only from GET /objects/{pid}. */
  async showCitation(marker: number): Promise<void> {
    const citation = this.citations.find((c) => c.marker === marker);
    if (!citation) return;
    const object = await this.client.getObject(citation.pid);
    this.popover.replaceChildren(
      el('div', 'popover-pid', object.pid),
      el('div', 'popover-title', object.explicit_meta.title),
      el('div', 'popover-meta', `${object.explicit_meta.domain} · ${object.explicit_meta.timestamp}`),
      el('div', 'popover-source', object.explicit_meta.source),
    );
    this.popover.hidden = false;
  }

  closePopover(): void {
    this.popover.hidden = true;
  }
}

export function mountApp(root: HTMLElement, base = ''): App {
  return new App(root, new ApiClient(base));
}
