/** Server-sent-events subscription with Last-Event-ID replay.
 *
 * fetch-based instead of EventSource so reconnects can send the replay
 * header explicitly; the server closes the stream at terminal states and
 * when the session waits on user input, so the loop resubscribes until a
 * terminal event arrives or the caller aborts. */

export interface SseEvent {
  id: number;
  event: string;
  data: unknown;
}

export function parseSseChunks(buffer: string): { events: SseEvent[]; rest: string } {
  const frames = buffer.split(/\r?\n\r?\n/);
  const rest = frames.pop() ?? '';
  const events: SseEvent[] = [];
  for (const frame of frames) {
    let id = 0;
    let event = 'message';
    const dataLines: string[] = [];
    for (const line of frame.split(/\r?\n/)) {
      if (line.startsWith('id:')) {
        id = Number(line.slice(3).trim());
      } else if (line.startsWith('event:')) {
        event = line.slice(6).trim();
      } else if (line.startsWith('data:')) {
        dataLines.push(line.slice(5).trim());
      }
    }
    if (dataLines.length === 0) continue;
    const raw = dataLines.join('\n');
    let data: unknown = raw;
    try {
      data = JSON.parse(raw);
    } catch {
      // non-JSON data stays a string
    }
    events.push({ id, event, data });
  }
  return { events, rest };
}

export interface StreamOptions {
  lastEventId?: number;
  onEvent: (event: SseEvent) => void;
  /** called when a connection attempt fails before the next retry */
  onRetry?: (error: unknown) => void;
  isTerminal?: (event: SseEvent) => boolean;
  signal?: AbortSignal;
  retryDelayMs?: number;
}

const DEFAULT_TERMINAL = (event: SseEvent) =>
  event.event === 'report_ready' || event.event === 'failed';

/** Stream one session's events, resubscribing with Last-Event-ID until a
 * terminal event is seen. Resolves with the id of the last event received. */
export async function streamEvents(url: string, options: StreamOptions): Promise<number> {
  let lastId = options.lastEventId ?? 0;
  const isTerminal = options.isTerminal ?? DEFAULT_TERMINAL;
  const retryDelay = options.retryDelayMs ?? 300;

  for (;;) {
    if (options.signal?.aborted) return lastId;
    try {
      const response = await fetch(url, {
        headers: lastId > 0 ? { 'Last-Event-ID': String(lastId) } : {},
        signal: options.signal,
      });
      if (!response.ok || !response.body) {
        throw new Error(`event stream HTTP ${response.status}`);
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder('utf-8');
      let buffer = '';
      let sawTerminal = false;
      for (;;) {
        const { value, done } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        const { events, rest } = parseSseChunks(buffer);
        buffer = rest;
        for (const event of events) {
          if (event.id <= lastId) continue; // replay overlap guard
          lastId = event.id;
          options.onEvent(event);
          if (isTerminal(event)) {
            sawTerminal = true;
          }
        }
      }
      if (sawTerminal) return lastId;
      // stream closed without a terminal event (e.g. awaiting user input):
      // wait for the caller to act, then resubscribe with replay
    } catch (error) {
      if (options.signal?.aborted) return lastId;
      options.onRetry?.(error);
    }
    await new Promise((resolve) => setTimeout(resolve, retryDelay));
  }
}
