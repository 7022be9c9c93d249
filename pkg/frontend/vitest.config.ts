import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: "./tests/globalSetup.ts",
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
