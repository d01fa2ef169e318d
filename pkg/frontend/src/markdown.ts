/** Minimal report markdown rendering.
 *
 * The UI never rewrites report content: every displayed string is byte-equal
 * to the server payload. Rendering only wraps lines in block elements and
 * turns [n] markers into citation buttons whose text is still "[n]". */

const ESCAPES: Record<string, string> = {
  '&': '&amp;',
  '<': '&lt;',
  '>': '&gt;',
  '"': '&quot;',
  "'": '&#39;',
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch] ?? ch);
}

export const MARKER_RE = /\[(\d+)\]/g;

/** Replace [n] markers (in already-escaped text) with citation buttons. */
function injectMarkers(escaped: string): string {
  return escaped.replace(
    MARKER_RE,
    (_match, n: string) =>
      `<button type="button" class="citation" data-marker="${n}">[${n}]</button>`,
  );
}

export function renderMarkdown(markdown: string): string {
  const blocks: string[] = [];
  let paragraph: string[] = [];

  const flush = () => {
    if (paragraph.length) {
      blocks.push(`<p>${paragraph.map((line) => injectMarkers(escapeHtml(line))).join('<br>')}</p>`);
      paragraph = [];
    }
  };

  for (const line of markdown.split('\n')) {
    const heading = /^(#{1,6})\s+(.*)$/.exec(line);
    if (heading) {
      flush();
      const level = heading[1]?.length ?? 1;
      blocks.push(`<h${level}>${injectMarkers(escapeHtml(heading[2] ?? ''))}</h${level}>`);
    } else if (!line.trim()) {
      flush();
    } else {
      paragraph.push(line);
    }
  }
  flush();
  return blocks.join('\n');
}

export function markersIn(text: string): number[] {
  const found: number[] = [];
  for (const match of text.matchAll(MARKER_RE)) {
    found.push(Number(match[1]));
  }
  return found;
}
