/** Reader for the parsed-dataset JSON dump produced by `histner parse-dataset`. */

import { readFile } from "node:fs/promises";

export interface DumpDocument {
  doc_id: string;
  split: string;
  tokens: string[];
}

export interface DatasetDump {
  dataset_id: string;
  language: string;
  documents: DumpDocument[];
}

export class EmptyInput extends Error {}

export async function readDatasetDump(path: string): Promise<DatasetDump> {
  let raw: string;
  try {
    raw = await readFile(path, "utf-8");
  } catch (err) {
    throw new EmptyInput(`cannot read dataset dump ${path}: ${err}`);
  }
  let payload: any;
  try {
    payload = JSON.parse(raw);
  } catch {
    throw new EmptyInput(`${path} is not valid JSON`);
  }
  if (payload?.format !== "histner-dataset" || payload?.version !== 1) {
    throw new EmptyInput(`${path} is not a histner-dataset v1 dump`);
  }
  const documents: DumpDocument[] = (payload.documents ?? []).map((d: any) => {
    if (typeof d?.doc_id !== "string" || !Array.isArray(d?.tokens)) {
      throw new EmptyInput(`${path}: malformed document entry`);
    }
    return { doc_id: d.doc_id, split: String(d.split ?? ""), tokens: d.tokens };
  });
  if (documents.length === 0) {
    throw new EmptyInput(`${path} contains no documents`);
  }
  return {
    dataset_id: String(payload.dataset_id ?? ""),
    language: String(payload.language ?? ""),
    documents,
  };
}

/** Passage reconstruction rule shared with the pipeline: single spaces. */
export function documentText(doc: DumpDocument): string {
  return doc.tokens.join(" ");
}
