// @vitest-environment happy-dom
import { describe, expect, it } from 'vitest';

import { renderChartSvg } from '../src/chart.js';

const rows = [
  { group: 'a', value: 2 },
  { group: 'b', value: 4 },
  { group: 'c', value: 1 },
];

describe('renderChartSvg', () => {
  it('renders one bar per row', () => {
    const root = document.createElement('div');
    root.innerHTML = renderChartSvg({ type: 'bar', x_field: 'group', y_field: 'value' }, rows);
    expect(root.querySelectorAll('rect.bar')).toHaveLength(3);
    expect(root.querySelectorAll('text.tick')).toHaveLength(3);
  });

  it('renders a polyline for line charts', () => {
    const root = document.createElement('div');
    root.innerHTML = renderChartSvg({ type: 'line', x_field: 'group', y_field: 'value' }, rows);
    const line = root.querySelector('polyline.line');
    expect(line).not.toBeNull();
    expect(line?.getAttribute('points')?.split(' ')).toHaveLength(3);
  });

  it('scales the tallest bar to the full plot height', () => {
    const root = document.createElement('div');
    root.innerHTML = renderChartSvg({ type: 'bar', x_field: 'group', y_field: 'value' }, rows);
    const heights = [...root.querySelectorAll('rect.bar')].map((r) =>
      Number(r.getAttribute('height')),
    );
    expect(Math.max(...heights)).toBeCloseTo(220 - 2 * 32, 0);
  });
});
