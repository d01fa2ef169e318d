import { describe, expect, it } from 'vitest';

import { parseSseChunks } from '../src/sse.js';

describe('parseSseChunks', () => {
  it('parses complete frames and keeps the partial tail', () => {
    const buffer =
      'id: 1\nevent: plan_proposed\ndata: {"kind":"plan_proposed","payload":{}}\n\n' +
      'id: 2\nevent: step_started\ndata: {"kind":"step_started","payload":{"step_id":"s1"}}\n\n' +
      'id: 3\nevent: step_comp';
    const { events, rest } = parseSseChunks(buffer);
    expect(events).toHaveLength(2);
    expect(events[0]).toMatchObject({ id: 1, event: 'plan_proposed' });
    expect(events[1]?.data).toMatchObject({ payload: { step_id: 's1' } });
    expect(rest).toBe('id: 3\nevent: step_comp');
  });

  it('handles crlf separators', () => {
    const { events } = parseSseChunks('id: 5\r\nevent: failed\r\ndata: {"kind":"failed"}\r\n\r\n');
    expect(events[0]).toMatchObject({ id: 5, event: 'failed' });
  });

  it('keeps non-json data as a string', () => {
    const { events } = parseSseChunks('id: 1\nevent: note\ndata: plain words\n\n');
    expect(events[0]?.data).toBe('plain words');
  });

  it('skips frames without data', () => {
    const { events } = parseSseChunks('id: 9\nevent: ping\n\n');
    expect(events).toHaveLength(0);
  });
});
