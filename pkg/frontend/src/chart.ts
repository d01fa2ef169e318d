/** Client-side rendering of declarative chart specs
 * ({type, x_field, y_field, series}) to inline SVG; no server images. */

export interface ChartSpec {
  type: 'bar' | 'line';
  x_field: string;
  y_field: string;
  series?: string | null;
}

export type ChartRow = Record<string, string | number>;

const WIDTH = 420;
const HEIGHT = 220;
const PAD = 32;

export function renderChartSvg(spec: ChartSpec, rows: ChartRow[]): string {
  const xs = rows.map((row) => String(row[spec.x_field] ?? ''));
  const ys = rows.map((row) => Number(row[spec.y_field] ?? 0));
  const maxY = Math.max(1e-9, ...ys.map((y) => Math.abs(y)));
  const innerW = WIDTH - 2 * PAD;
  const innerH = HEIGHT - 2 * PAD;
  const parts: string[] = [
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" class="chart" role="img" aria-label="${spec.type} chart of ${spec.y_field} by ${spec.x_field}">`,
    `<line x1="${PAD}" y1="${HEIGHT - PAD}" x2="${WIDTH - PAD}" y2="${HEIGHT - PAD}" class="axis"/>`,
    `<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${HEIGHT - PAD}" class="axis"/>`,
  ];
  const n = Math.max(rows.length, 1);
  if (spec.type === 'bar') {
    const barW = (innerW / n) * 0.7;
    rows.forEach((_, i) => {
      const y = ys[i] ?? 0;
      const h = (Math.abs(y) / maxY) * innerH;
      const x = PAD + (innerW / n) * (i + 0.15);
      parts.push(
        `<rect x="${x.toFixed(1)}" y="${(HEIGHT - PAD - h).toFixed(1)}" width="${barW.toFixed(1)}" height="${h.toFixed(1)}" class="bar"/>`,
      );
    });
  } else {
    const points = ys
      .map((y, i) => {
        const px = PAD + (innerW / Math.max(n - 1, 1)) * i;
        const py = HEIGHT - PAD - (Math.abs(y) / maxY) * innerH;
        return `${px.toFixed(1)},${py.toFixed(1)}`;
      })
      .join(' ');
    parts.push(`<polyline points="${points}" class="line" fill="none"/>`);
  }
  xs.forEach((label, i) => {
    const x = PAD + (innerW / n) * (i + 0.5);
    parts.push(
      `<text x="${x.toFixed(1)}" y="${HEIGHT - PAD + 14}" text-anchor="middle" class="tick">${label}</text>`,
    );
  });
  parts.push('</svg>');
  return parts.join('');
}
