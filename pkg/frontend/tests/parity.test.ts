import { readFile } from "node:fs/promises";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { parseSplatPly, propertyValue } from "../src/ply";

const fixturesDir = fileURLToPath(new URL("./fixtures/", import.meta.url));

interface Expected {
  count: number;
  samples: Array<{ index: number; property: string; value: number }>;
}

async function loadCase(stem: string): Promise<{ count: number; expected: Expected; raw: Uint8Array }> {
  const raw = new Uint8Array(await readFile(`${fixturesDir}${stem}.ply`));
  const expected = JSON.parse(await readFile(`${fixturesDir}${stem}.expected.json`, "utf-8")) as Expected;
  return { count: expected.count, expected, raw };
}

describe.each(["empty", "two", "large10k"])("fixture %s", (stem) => {
  it("matches the server-side parse bit for bit", async () => {
    const { expected, raw } = await loadCase(stem);
    const cloud = parseSplatPly(raw);
    expect(cloud.count).toBe(expected.count);
    expect(cloud.values).toHaveLength(expected.count * 62);
    for (const sample of expected.samples) {
      const actual = propertyValue(cloud, sample.index, sample.property);
      // both sides hold exact float32 values widened to float64; Object.is
      // also distinguishes -0 from 0
      expect(
        Object.is(actual, sample.value),
        `${stem}[${sample.index}].${sample.property}: ${actual} != ${sample.value}`
      ).toBe(true);
    }
  });
});

describe("sample coverage", () => {
  it("exercises every schema property on the two-splat fixture", async () => {
    const { expected } = await loadCase("two");
    const perRow = new Map<number, Set<string>>();
    for (const sample of expected.samples) {
      if (!perRow.has(sample.index)) perRow.set(sample.index, new Set());
      perRow.get(sample.index)!.add(sample.property);
    }
    expect(perRow.get(0)?.size).toBe(62);
    expect(perRow.get(1)?.size).toBe(62);
  });

  it("spot-checks at least 100 values on the large fixture", async () => {
    const { expected } = await loadCase("large10k");
    expect(expected.samples.length).toBeGreaterThanOrEqual(100);
  });
});
