import { describe, expect, it } from "vitest";

import { serializeSnapshot } from "../src/asnap.js";

describe("serializeSnapshot", () => {
  it("writes the smallest snapshot with an 8-byte payload", () => {
    const buf = serializeSnapshot({
      checkpoint: 0,
      tag: "target",
      layers: [
        { layerId: 0, nExamples: 1, nFeatures: 2, values: Float32Array.from([1, 2]) },
      ],
    });
    expect(buf.subarray(0, 4).toString("ascii")).toBe("ABES");
    expect(buf.readUInt32LE(4)).toBe(1); // format version
    expect(buf.readBigUInt64LE(8)).toBe(0n);
    expect(buf.readUInt8(16)).toBe(1); // target tag code
    expect(buf.readUInt32LE(17)).toBe(1); // layer count
    expect(buf.length).toBe(21 + 12 + 8);
    const payload = buf.subarray(buf.length - 8);
    expect(payload.readFloatLE(0)).toBe(1);
    expect(payload.readFloatLE(4)).toBe(2);
  });

  it("computes the exact size for multiple layers", () => {
    const buf = serializeSnapshot({
      checkpoint: 7,
      tag: "source_valid",
      layers: [
        { layerId: 0, nExamples: 3, nFeatures: 4, values: new Float32Array(12).fill(1) },
        { layerId: 1, nExamples: 3, nFeatures: 2, values: new Float32Array(6).fill(2) },
      ],
    });
    expect(buf.length).toBe(21 + (12 + 48) + (12 + 24));
    expect(buf.readUInt8(16)).toBe(0);
  });

  it("rejects non-finite values with coordinates", () => {
    const values = Float32Array.from([1, NaN, 3, 4]);
    expect(() =>
      serializeSnapshot({
        checkpoint: 0,
        tag: "target",
        layers: [{ layerId: 0, nExamples: 2, nFeatures: 2, values }],
      }),
    ).toThrow(/layer 0, row 0, col 1/);
  });

  it("rejects non-contiguous layer ids", () => {
    expect(() =>
      serializeSnapshot({
        checkpoint: 0,
        tag: "target",
        layers: [{ layerId: 1, nExamples: 1, nFeatures: 1, values: Float32Array.from([1]) }],
      }),
    ).toThrow(/contiguous/);
  });

  it("rejects mismatched example counts", () => {
    expect(() =>
      serializeSnapshot({
        checkpoint: 0,
        tag: "target",
        layers: [
          { layerId: 0, nExamples: 1, nFeatures: 1, values: Float32Array.from([1]) },
          { layerId: 1, nExamples: 2, nFeatures: 1, values: Float32Array.from([1, 2]) },
        ],
      }),
    ).toThrow(/examples/);
  });
});
