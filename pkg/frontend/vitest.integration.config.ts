import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["integration/**/*.test.ts"],
    globalSetup: ["./integration/setup.ts"],
    testTimeout: 30_000,
    hookTimeout: 60_000,
    // the suite mutates one shared service; keep a single worker
    pool: "threads",
    maxWorkers: 1,
    fileParallelism: false,
  },
});
