import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // The serving round trip spawns the Python CLI; give it headroom.
    testTimeout: 180_000,
    hookTimeout: 60_000,
  },
});
