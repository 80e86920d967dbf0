#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { EmptyInput } from "./dump.js";
import { DEFAULT_MODEL, HASH_MODEL, ModelLoadFailure } from "./encoders.js";
import { exportEmbeddings } from "./export.js";
import { TableFormatError } from "./table.js";

async function main() {
  await yargs(hideBin(process.argv))
    .command(
      "export-embeddings",
      "embed every document of a dataset dump and write an embedding table",
      (cmd) =>
        cmd
          .option("input", { type: "string", demandOption: true,
                             describe: "parsed-dataset JSON dump" })
          .option("output", { type: "string", demandOption: true,
                              describe: "embedding table file to write" })
          .option("model", { type: "string", default: DEFAULT_MODEL,
                             describe: `encoder id (use ${HASH_MODEL} for the offline hashing encoder)` })
          .option("batch-size", { type: "number", default: 32 }),
      async (argv) => {
        const summary = await exportEmbeddings({
          input: argv.input,
          output: argv.output,
          modelId: argv.model,
          batchSize: argv["batch-size"],
        });
        console.log(
          `wrote ${summary.documents} vectors (dim ${summary.dimension}, ` +
          `model ${summary.modelId}) to ${summary.output}`);
      })
    .demandCommand(1)
    .strict()
    .help()
    .parseAsync();
}

main().catch((err) => {
  if (err instanceof EmptyInput || err instanceof ModelLoadFailure
      || err instanceof TableFormatError) {
    console.error(`error: ${err.message}`);
  } else {
    console.error(err);
  }
  process.exit(2);
});
