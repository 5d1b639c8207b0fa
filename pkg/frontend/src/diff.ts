/** Word-level edit distance for the live diff counter.  Must agree with
 * the server-side analysis: lowercase, punctuation split off as its own
 * tokens, whitespace-separated. */

const PUNCT = new Set([...".,!?;:()[]{}<>\"'`«»„“”‚‘’…"]);

export function tokenize(text: string): string[] {
  const tokens: string[] = [];
  let word = "";
  for (const ch of text.normalize("NFC").toLowerCase()) {
    if (/\s/.test(ch)) {
      if (word) tokens.push(word);
      word = "";
    } else if (PUNCT.has(ch)) {
      if (word) tokens.push(word);
      word = "";
      tokens.push(ch);
    } else {
      word += ch;
    }
  }
  if (word) tokens.push(word);
  return tokens;
}

export function wordEditDistance(a: string, b: string): number {
  const ta = tokenize(a);
  const tb = tokenize(b);
  let prev = Array.from({ length: tb.length + 1 }, (_, j) => j);
  for (let i = 1; i <= ta.length; i++) {
    const cur = [i, ...new Array<number>(tb.length).fill(0)];
    for (let j = 1; j <= tb.length; j++) {
      cur[j] = Math.min(
        prev[j] + 1,
        cur[j - 1] + 1,
        prev[j - 1] + (ta[i - 1] === tb[j - 1] ? 0 : 1),
      );
    }
    prev = cur;
  }
  return prev[tb.length];
}
