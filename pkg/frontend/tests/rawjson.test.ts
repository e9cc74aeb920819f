import { describe, expect, it } from "vitest";
import { rawNumberLiterals } from "../src/rawjson.js";

describe("rawNumberLiterals", () => {
  it("extracts literals in document order", () => {
    const json = '{"results":[{"dissimilarity":0.25},{"dissimilarity":1.5},{"dissimilarity":3}]}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["0.25", "1.5", "3"]);
  });

  it("preserves formatting JSON.parse would destroy", () => {
    const json = '{"dissimilarity":1e-07,"x":{"dissimilarity":0.30000000000000004}}';
    const literals = rawNumberLiterals(json, "dissimilarity");
    expect(literals).toEqual(["1e-07", "0.30000000000000004"]);
    // JavaScript would re-render the first one differently
    expect(String(JSON.parse('{"v":1e-07}').v)).toBe("1e-7");
  });

  it("handles negative, exponent, and integer forms", () => {
    const json = '{"d":-0.5,"d":2E+3,"d":0,"d":-7}';
    expect(rawNumberLiterals(json, "d")).toEqual(["-0.5", "2E+3", "0", "-7"]);
  });

  it("ignores the key appearing inside string values", () => {
    const json = '{"doc_id":"\\"dissimilarity\\":9","dissimilarity":1.25}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["1.25"]);
  });

  it("ignores a matching string used as an array value", () => {
    const json = '{"tags":["dissimilarity"],"dissimilarity":4.5}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["4.5"]);
  });

  it("skips non-number values under the key", () => {
    const json = '{"dissimilarity":null,"dissimilarity":"n/a","dissimilarity":8.125}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["8.125"]);
  });

  it("tolerates whitespace around the colon", () => {
    const json = '{ "dissimilarity" :\n\t 0.625 }';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["0.625"]);
  });

  it("returns empty for absent keys and empty payloads", () => {
    expect(rawNumberLiterals("{}", "dissimilarity")).toEqual([]);
    expect(rawNumberLiterals("", "dissimilarity")).toEqual([]);
  });

  it("survives escaped quotes and backslashes in other strings", () => {
    const json = '{"a":"ends with backslash \\\\","dissimilarity":3.5,"b":"quote \\" inside"}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["3.5"]);
  });

  it("round-trips a Python-style payload byte-for-byte", () => {
    // Python's repr switches to exponent notation at 1e-05 and keeps a
    // trailing .0 on integral floats; both must come through untouched.
    const json = '{"results":[{"dissimilarity":0.0},{"dissimilarity":1e-05},{"dissimilarity":12.0}]}';
    expect(rawNumberLiterals(json, "dissimilarity")).toEqual(["0.0", "1e-05", "12.0"]);
  });
});
