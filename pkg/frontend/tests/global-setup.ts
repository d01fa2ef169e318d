/** Spawns the mock-backed backend once for the whole test run: generates a
 * seeded corpus, ingests and indexes it, then serves the HTTP API. */

import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

const PORT = 8924;
export const BASE_URL = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let workDir: string | null = null;

async function waitForServer(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/sessions/probe`);
      if (response.status === 404) return; // server answers: up
    } catch {
      // not yet listening
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error('backend did not come up in time');
}

export async function setup() {
  workDir = mkdtempSync(join(tmpdir(), 'iodeep-ui-'));
  const dataDir = join(workDir, 'data');
  const synthDir = join(workDir, 'synth');
  const env = { ...process.env, IOD_MOCK: '1' };
  const cli = ['-m', 'iodeep.cli'];
  execFileSync('python3', [...cli, 'gen', synthDir, '--seed', '42', '--docs', '4', '--questions', '6'], { env });
  execFileSync('python3', [...cli, '--data-dir', dataDir, 'ingest', join(synthDir, 'corpus'), '--domain', 'fallback'], { env });
  execFileSync('python3', [...cli, '--data-dir', dataDir, 'index'], { env });
  server = spawn(
    'python3',
    [...cli, '--data-dir', dataDir, 'serve', '--http', `127.0.0.1:${PORT}`],
    { env, stdio: 'ignore' },
  );
  await waitForServer(BASE_URL, 60_000);
  process.env.IODEEP_TEST_BASE = BASE_URL;
  process.env.IODEEP_TEST_SYNTH = synthDir;
}

export async function teardown() {
  server?.kill('SIGTERM');
  if (workDir) rmSync(workDir, { recursive: true, force: true });
}
