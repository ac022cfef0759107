/** Score literals are lifted verbatim from the raw response text, so what
 * the panels display is byte-identical to what the service sent. In the
 * documented wire schema a `"score"` key appears only on result items, in
 * ranked order, which makes a positional scan sound. */

const NUMBER_CHARS = "+-0123456789.eE";

export function extractScoreLiterals(rawBody: string): string[] {
  const literals: string[] = [];
  const key = '"score"';
  let from = 0;
  for (;;) {
    const at = rawBody.indexOf(key, from);
    if (at < 0) {
      break;
    }
    let i = at + key.length;
    while (i < rawBody.length && " \t\r\n".includes(rawBody[i])) {
      i += 1;
    }
    if (rawBody[i] !== ":") {
      from = at + key.length;
      continue; // a string value that merely spells "score"
    }
    i += 1;
    while (i < rawBody.length && " \t\r\n".includes(rawBody[i])) {
      i += 1;
    }
    let end = i;
    while (end < rawBody.length && NUMBER_CHARS.includes(rawBody[end])) {
      end += 1;
    }
    if (end > i) {
      literals.push(rawBody.slice(i, end));
    }
    from = end;
  }
  return literals;
}
