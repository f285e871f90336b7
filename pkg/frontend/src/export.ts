// Lossless conversion of a dataset directory into array batches:
// batches.npz (clouds, labels, states, actions, episodes) plus index.json
// carrying the episode table and a checksum manifest pairing each batch
// with its source demos.

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import {
  DatasetFormatError,
  DemoArrays,
  Manifest,
  loadManifest,
  readDemoArrays,
  sha256Hex,
  sortedDemoEntries,
} from "./manifest.js";
import { NpyData, writeNpz } from "./npy.js";

export interface EpisodeRow {
  id: string;
  start: number;
  length: number;
  scene_id: string;
  dock: { x: number; y: number; yaw: number };
  provenance: Record<string, string>;
  source_sha256: string;
}

export interface BatchIndex {
  format: "dockaug-batches";
  version: 1;
  feature_version: string;
  points_per_frame: number;
  labels: string[];
  episodes: EpisodeRow[];
  checksums: {
    batches_npz: string;
    arrays: Record<string, string>;
  };
}

import { FEATURE_VERSION } from "./features.js";

function concatTyped<T extends NpyData>(
  parts: T[],
  make: (n: number) => T,
): T {
  const total = parts.reduce((a, p) => a + p.length, 0);
  const out = make(total);
  let cursor = 0;
  for (const p of parts) {
    (out as unknown as { set(src: T, o: number): void }).set(p, cursor);
    cursor += p.length;
  }
  return out;
}

export function exportBatches(datasetDir: string, outDir: string): BatchIndex {
  const manifest: Manifest = loadManifest(datasetDir);
  const entries = sortedDemoEntries(manifest);
  if (entries.length === 0) {
    throw new DatasetFormatError(`dataset ${datasetDir} lists no demos`);
  }
  const n = manifest.points_per_frame;
  const demos: DemoArrays[] = [];
  for (const entry of entries) {
    if (entry.points !== n) {
      throw new DatasetFormatError(
        `demo ${entry.id}: ${entry.points} points per frame, manifest says ${n}`,
      );
    }
    demos.push(readDemoArrays(datasetDir, entry));
  }
  const episodes: EpisodeRow[] = [];
  let start = 0;
  for (const demo of demos) {
    episodes.push({
      id: demo.entry.id,
      start,
      length: demo.entry.frames,
      scene_id: demo.entry.scene_id,
      dock: demo.entry.dock,
      provenance: demo.entry.provenance as unknown as Record<string, string>,
      source_sha256: demo.blobSha256,
    });
    start += demo.entry.frames;
  }
  const total = start;
  const clouds = concatTyped(
    demos.map((d) => d.points),
    (len) => new Float32Array(len),
  );
  const labels = concatTyped(
    demos.map((d) => d.labels),
    (len) => new Uint8Array(len),
  );
  const states = concatTyped(
    demos.map((d) => d.states),
    (len) => new Float64Array(len),
  );
  const actions = concatTyped(
    demos.map((d) => d.actions),
    (len) => new Float64Array(len),
  );
  const episodesArr = new BigInt64Array(2 * episodes.length);
  episodes.forEach((ep, i) => {
    episodesArr[2 * i] = BigInt(ep.start);
    episodesArr[2 * i + 1] = BigInt(ep.length);
  });

  const npz = writeNpz({
    clouds: { data: clouds, shape: [total, n, 3] },
    labels: { data: labels, shape: [total, n] },
    states: { data: states, shape: [total, 8] },
    actions: { data: actions, shape: [total, 8] },
    episodes: { data: episodesArr, shape: [episodes.length, 2] },
  });

  const arrayChecksums: Record<string, string> = {
    clouds: sha256Hex(new Uint8Array(clouds.buffer, 0, clouds.byteLength)),
    labels: sha256Hex(labels),
    states: sha256Hex(new Uint8Array(states.buffer, 0, states.byteLength)),
    actions: sha256Hex(new Uint8Array(actions.buffer, 0, actions.byteLength)),
  };
  const index: BatchIndex = {
    format: "dockaug-batches",
    version: 1,
    feature_version: FEATURE_VERSION,
    points_per_frame: n,
    labels: manifest.labels,
    episodes,
    checksums: { batches_npz: sha256Hex(npz), arrays: arrayChecksums },
  };
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "batches.npz"), npz);
  writeFileSync(join(outDir, "index.json"), JSON.stringify(index, null, 2) + "\n");
  return index;
}
