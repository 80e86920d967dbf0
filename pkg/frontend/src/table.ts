/** The embedding table wire format.
 *
 * Header line `HNE-EMB v1 <dimension> <model_id>`, then one line per
 * document: `<doc_id>\t<float> <float> ...` with exactly `dimension`
 * space-separated decimal floats, 8 significant digits. Doc ids must not
 * contain tabs. UTF-8 throughout.
 */

export const MAGIC = "HNE-EMB";
export const VERSION = "v1";

export interface EmbeddingRow {
  docId: string;
  vector: number[];
}

export class TableFormatError extends Error {}

/** 8-significant-digit decimal text, trailing zeros trimmed. */
export function formatFloat(value: number): string {
  if (!Number.isFinite(value)) {
    throw new TableFormatError(`non-finite vector component: ${value}`);
  }
  if (value === 0) return "0";
  let text = value.toPrecision(8);
  if (text.includes("e")) {
    const [mantissa, exponent] = text.split("e");
    return trimZeros(mantissa) + "e" + exponent;
  }
  return trimZeros(text);
}

function trimZeros(mantissa: string): string {
  if (!mantissa.includes(".")) return mantissa;
  return mantissa.replace(/0+$/, "").replace(/\.$/, "");
}

export function serializeTable(dimension: number, modelId: string,
                               rows: EmbeddingRow[]): string {
  const lines = [`${MAGIC} ${VERSION} ${dimension} ${modelId}`];
  for (const { docId, vector } of rows) {
    if (docId.includes("\t")) {
      throw new TableFormatError(`doc_id ${JSON.stringify(docId)} contains a tab`);
    }
    if (vector.length !== dimension) {
      throw new TableFormatError(
        `vector for ${docId} has ${vector.length} components, header says ${dimension}`);
    }
    lines.push(docId + "\t" + vector.map(formatFloat).join(" "));
  }
  return lines.join("\n") + "\n";
}

export function parseTable(text: string): { dimension: number; modelId: string;
                                            rows: EmbeddingRow[] } {
  const lines = text.split("\n");
  const header = lines[0] ?? "";
  const parts = header.split(" ");
  if (parts.length < 3 || parts[0] !== MAGIC || parts[1] !== VERSION) {
    throw new TableFormatError(`bad header: ${JSON.stringify(header)}`);
  }
  const dimension = Number(parts[2]);
  if (!Number.isInteger(dimension) || dimension < 1) {
    throw new TableFormatError(`bad dimension in header: ${parts[2]}`);
  }
  const modelId = parts.slice(3).join(" ");
  const rows: EmbeddingRow[] = [];
  const seen = new Set<string>();
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    if (!line) continue;
    const tab = line.indexOf("\t");
    if (tab <= 0) {
      throw new TableFormatError(`line ${i + 1}: missing doc_id field`);
    }
    const docId = line.slice(0, tab);
    if (seen.has(docId)) {
      throw new TableFormatError(`line ${i + 1}: duplicate doc_id ${docId}`);
    }
    seen.add(docId);
    const vector = line.slice(tab + 1).split(" ").map(Number);
    if (vector.length !== dimension || vector.some((x) => Number.isNaN(x))) {
      throw new TableFormatError(`line ${i + 1}: expected ${dimension} floats`);
    }
    rows.push({ docId, vector });
  }
  return { dimension, modelId, rows };
}
