import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    environment: 'node',
    // the sandbox exposes a single core; one worker keeps subprocess tests calm
    fileParallelism: false,
  },
});
