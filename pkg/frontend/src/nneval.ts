// Out-of-process re-check of the primary 1-NN evaluation: recompute every
// training feature from the exported batches, replay each logged rollout
// step's match decision, and rebuild the success table. Any disagreement
// in matched index, emitted action, or table entry is reported.

import { readFileSync } from "node:fs";
import { join } from "node:path";

import {
  FEATURE_VERSION,
  TRUST_RADIUS,
  frameFeature,
  nearestIndex,
} from "./features.js";
import { BatchIndex } from "./export.js";
import { readNpz } from "./npy.js";

export interface RolloutLog {
  feature_version: string;
  trust_radius: number;
  scene_id: string;
  object_codes: number[];
  docks: Array<{ x: number; y: number; yaw: number }>;
  success_table: Array<{ dock: number; successes: number; trials: number; rate: number }>;
  rollouts: Array<{
    dock: number;
    seed: number;
    success: boolean;
    steps: Array<{ f: number[]; match: number; action: number[] }>;
  }>;
}

export interface Divergence {
  rollout: number;
  step: number;
  kind: "match" | "action" | "ood";
  expected: unknown;
  actual: unknown;
}

export interface XcheckResult {
  table: Array<{ dock: number; successes: number; trials: number; rate: number }>;
  divergences: Divergence[];
  checkedSteps: number;
  equal: boolean;
}

export class FeatureVersionMismatch extends Error {}

export function nnEvalXcheck(batchesDir: string, logPath: string): XcheckResult {
  const index = JSON.parse(
    readFileSync(join(batchesDir, "index.json"), "utf8"),
  ) as BatchIndex;
  const log = JSON.parse(readFileSync(logPath, "utf8")) as RolloutLog;
  if (log.feature_version !== FEATURE_VERSION || index.feature_version !== FEATURE_VERSION) {
    throw new FeatureVersionMismatch(
      `refusing to compare: log has ${log.feature_version}, adapter implements ${FEATURE_VERSION}`,
    );
  }
  if (log.trust_radius !== TRUST_RADIUS) {
    throw new FeatureVersionMismatch(
      `refusing to compare: log trust radius ${log.trust_radius} vs ${TRUST_RADIUS}`,
    );
  }
  const npz = readNpz(readFileSync(join(batchesDir, "batches.npz")));
  const clouds = npz.get("clouds")!.data as Float32Array;
  const labels = npz.get("labels")!.data as Uint8Array;
  const states = npz.get("states")!.data as Float64Array;
  const actions = npz.get("actions")!.data as Float64Array;
  const n = index.points_per_frame;
  const totalFrames = labels.length / n;

  // training features, recomputed from raw arrays
  const features: number[][] = [];
  for (let t = 0; t < totalFrames; t++) {
    features.push(
      frameFeature(
        clouds.subarray(3 * n * t, 3 * n * (t + 1)),
        labels.subarray(n * t, n * (t + 1)),
        states.subarray(8 * t, 8 * (t + 1)),
        n,
        log.object_codes,
      ),
    );
  }

  const divergences: Divergence[] = [];
  let checkedSteps = 0;
  log.rollouts.forEach((rollout, ri) => {
    rollout.steps.forEach((step, si) => {
      checkedSteps += 1;
      const { index: match, d2 } = nearestIndex(features, step.f);
      const ood = d2 > TRUST_RADIUS * TRUST_RADIUS;
      const expected = ood ? -1 : match;
      if (expected !== step.match) {
        divergences.push({
          rollout: ri,
          step: si,
          kind: step.match === -1 || expected === -1 ? "ood" : "match",
          expected,
          actual: step.match,
        });
        return;
      }
      if (step.match >= 0) {
        for (let k = 0; k < 8; k++) {
          if (actions[8 * step.match + k] !== step.action[k]) {
            divergences.push({
              rollout: ri,
              step: si,
              kind: "action",
              expected: actions[8 * step.match + k],
              actual: step.action[k],
            });
            return;
          }
        }
      }
    });
  });

  // per-dock success table from the verified rollouts
  const byDock = new Map<number, { successes: number; trials: number }>();
  for (const rollout of log.rollouts) {
    const row = byDock.get(rollout.dock) ?? { successes: 0, trials: 0 };
    row.trials += 1;
    row.successes += rollout.success ? 1 : 0;
    byDock.set(rollout.dock, row);
  }
  const table = [...byDock.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([dock, row]) => ({
      dock,
      successes: row.successes,
      trials: row.trials,
      rate: row.successes / Math.max(1, row.trials),
    }));

  const equal =
    divergences.length === 0 &&
    table.length === log.success_table.length &&
    table.every((row, i) => {
      const ref = log.success_table[i];
      return (
        row.dock === ref.dock &&
        row.successes === ref.successes &&
        row.trials === ref.trials &&
        row.rate === ref.rate
      );
    });
  return { table, divergences, checkedSteps, equal };
}
