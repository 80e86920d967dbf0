/** Batch export: dataset dump in, embedding table file out. */

import { writeFile } from "node:fs/promises";

import { documentText, readDatasetDump } from "./dump.js";
import { DEFAULT_MODEL, Encoder, makeEncoder } from "./encoders.js";
import { EmbeddingRow, serializeTable } from "./table.js";

export interface EmbeddingJob {
  input: string;
  output: string;
  modelId?: string;
  batchSize?: number;
}

export interface ExportSummary {
  documents: number;
  dimension: number;
  modelId: string;
  output: string;
}

export async function exportEmbeddings(job: EmbeddingJob,
                                       encoder?: Encoder): Promise<ExportSummary> {
  const batchSize = job.batchSize ?? 32;
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${job.batchSize}`);
  }
  const dump = await readDatasetDump(job.input);
  const enc = encoder ?? await makeEncoder(job.modelId ?? DEFAULT_MODEL);

  const rows: EmbeddingRow[] = [];
  for (let start = 0; start < dump.documents.length; start += batchSize) {
    const batch = dump.documents.slice(start, start + batchSize);
    const vectors = await enc.encode(batch.map(documentText));
    batch.forEach((doc, i) => rows.push({ docId: doc.doc_id, vector: vectors[i] }));
  }

  // Single deterministic write: re-runs overwrite with identical bytes.
  await writeFile(job.output, serializeTable(enc.dimension, enc.modelId, rows),
                  "utf-8");
  return {
    documents: rows.length,
    dimension: enc.dimension,
    modelId: enc.modelId,
    output: job.output,
  };
}
