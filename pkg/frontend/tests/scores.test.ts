import { describe, expect, it } from "vitest";

import { extractScoreLiterals } from "../src/scores.js";

describe("extractScoreLiterals", () => {
  it("lifts number tokens verbatim", () => {
    const raw = '{"items": [{"id": "a", "score": 0.5}, {"id": "b", "score": 1.0}]}';
    expect(extractScoreLiterals(raw)).toEqual(["0.5", "1.0"]);
  });

  it("keeps trailing-zero and exponent forms byte-exact", () => {
    const raw =
      '{"items": [{"score": 1.0}, {"score": 0.3333333333333333}, ' +
      '{"score": 1e-05}, {"score": 7.25e-08}]}';
    expect(extractScoreLiterals(raw)).toEqual([
      "1.0",
      "0.3333333333333333",
      "1e-05",
      "7.25e-08",
    ]);
  });

  it("ignores string values that merely spell score", () => {
    const raw = '{"items": [{"name": "score", "score": 0.25}]}';
    expect(extractScoreLiterals(raw)).toEqual(["0.25"]);
  });

  it("tolerates whitespace around the colon", () => {
    const raw = '{"score"  :\n  0.125}';
    expect(extractScoreLiterals(raw)).toEqual(["0.125"]);
  });

  it("returns literals in document order", () => {
    const raw = '{"a": {"score": 0.9}, "b": {"score": 0.1}}';
    expect(extractScoreLiterals(raw)).toEqual(["0.9", "0.1"]);
  });
});
