/**
 * Raw-literal extraction from JSON text.
 *
 * JSON.parse converts numbers to IEEE-754 doubles, and re-stringifying a
 * double does not necessarily reproduce the server's original literal (the
 * service formats floats with Python conventions, e.g. "1e-07" where
 * JavaScript would print "1e-7"). To display numbers exactly as the service
 * sent them, we pull the literal substrings out of the raw payload text.
 */

const NUMBER_LITERAL = /^-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][+-]?\d+)?/;

function isWhitespace(ch: string): boolean {
  return ch === " " || ch === "\t" || ch === "\n" || ch === "\r";
}

/**
 * Return the raw number literals appearing as the value of `key`, in
 * document order.
 *
 * The scanner walks the text once, consuming string tokens with full escape
 * handling, so a matching substring inside some other string value can never
 * be mistaken for a key. In valid JSON a string token followed by ":" is
 * always an object key, which is exactly what we match on. The key itself is
 * compared against the undecoded characters between the quotes; the service
 * emits plain ASCII keys, so no unescaping is needed.
 */
export function rawNumberLiterals(json: string, key: string): string[] {
  const literals: string[] = [];
  const n = json.length;
  let i = 0;
  while (i < n) {
    if (json[i] !== '"') {
      i += 1;
      continue;
    }
    const start = i + 1;
    i += 1;
    while (i < n && json[i] !== '"') {
      i += json[i] === "\\" ? 2 : 1;
    }
    const inner = json.slice(start, i);
    i += 1; // closing quote
    if (inner !== key) continue;

    let j = i;
    while (j < n && isWhitespace(json[j])) j += 1;
    if (json[j] !== ":") continue;
    j += 1;
    while (j < n && isWhitespace(json[j])) j += 1;
    const match = NUMBER_LITERAL.exec(json.slice(j));
    if (match && match[0].length > 0) {
      literals.push(match[0]);
      i = j + match[0].length;
    }
  }
  return literals;
}
