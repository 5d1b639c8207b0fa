import { describe, expect, it } from "vitest";

import { tokenize, wordEditDistance } from "../src/diff.js";

describe("tokenize", () => {
  it("splits punctuation like the server side", () => {
    expect(tokenize("Ein Mann reitet.")).toEqual(["ein", "mann", "reitet", "."]);
  });

  it("collapses whitespace", () => {
    expect(tokenize("A  b")).toEqual(["a", "b"]);
  });

  it("handles empty text", () => {
    expect(tokenize("")).toEqual([]);
  });

  it("normalizes to NFC before lowercasing", () => {
    expect(tokenize("Äpfel!")).toEqual(["äpfel", "!"]);
  });
});

describe("wordEditDistance", () => {
  it("is zero for identical captions", () => {
    expect(wordEditDistance("a man rides", "a man rides")).toBe(0);
  });

  it("counts a single insertion", () => {
    expect(wordEditDistance("a man", "a tall man")).toBe(1);
  });

  it("counts substitutions and deletions", () => {
    expect(wordEditDistance("the cat sleeps", "a cat sleeps quietly")).toBe(2);
    expect(wordEditDistance("one two three", "one")).toBe(2);
  });

  it("is symmetric", () => {
    const pairs: Array<[string, string]> = [
      ["a b c", "b c d"],
      ["", "x y"],
      ["a dog runs.", "a dog runs"],
    ];
    for (const [a, b] of pairs) {
      expect(wordEditDistance(a, b)).toBe(wordEditDistance(b, a));
    }
  });

  it("treats punctuation edits as word edits", () => {
    expect(wordEditDistance("a dog runs", "a dog runs .")).toBe(1);
  });
});
