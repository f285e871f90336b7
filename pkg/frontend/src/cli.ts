// Usage:
//   node dist/src/cli.js export <dataset-dir> <out-dir>
//   node dist/src/cli.js xcheck <batches-dir> <rollout-log.json>

import { exportBatches } from "./export.js";
import { FeatureVersionMismatch, nnEvalXcheck } from "./nneval.js";

function main(argv: string[]): number {
  const [command, a, b] = argv;
  if (command === "export" && a && b) {
    const index = exportBatches(a, b);
    console.log(
      JSON.stringify(
        {
          out: b,
          episodes: index.episodes.length,
          frames: index.episodes.reduce((acc, e) => acc + e.length, 0),
          sha256: index.checksums.batches_npz,
        },
        null,
        2,
      ),
    );
    return 0;
  }
  if (command === "xcheck" && a && b) {
    try {
      const result = nnEvalXcheck(a, b);
      console.log(
        JSON.stringify(
          {
            equal: result.equal,
            checked_steps: result.checkedSteps,
            divergences: result.divergences.slice(0, 10),
            table: result.table,
          },
          null,
          2,
        ),
      );
      return result.equal ? 0 : 1;
    } catch (err) {
      if (err instanceof FeatureVersionMismatch) {
        console.error(String(err));
        return 2;
      }
      throw err;
    }
  }
  console.error("usage: cli.js export <dataset> <out> | xcheck <batches> <log>");
  return 2;
}

process.exit(main(process.argv.slice(2)));
