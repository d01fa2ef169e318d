import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    globalSetup: ['./tests/global-setup.ts'],
    testTimeout: 30_000,
    hookTimeout: 120_000,
    // integration tests talk to the spawned backend; the window shares its
    // origin so happy-dom's same-origin policy allows the requests
    environmentOptions: {
      happyDOM: { url: 'http://127.0.0.1:8924' },
    },
  },
});
