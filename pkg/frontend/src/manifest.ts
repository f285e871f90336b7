// Reader for the dockaug dataset directory format:
//   manifest.json, scenes/<scene_id>.json, demos/<demo_id>.bin
// Each demo blob is a flat little-endian concatenation of sections whose
// byte offsets are listed in the manifest entry:
//   points  L*N*3 float32, labels L*N uint8, [colors L*N*3 float32],
//   states  L*8 float64 (px py pz qw qx qy qz gripper), actions L*8 float64.

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import { join } from "node:path";

export interface PlanarDock {
  x: number;
  y: number;
  yaw: number;
}

export interface Provenance {
  kind: "source" | "augmented";
  source_id?: string;
  dock_id?: string;
}

export interface DemoEntry {
  id: string;
  file: string;
  scene_id: string;
  dock: PlanarDock;
  provenance: Provenance;
  frames: number;
  points: number;
  has_colors: boolean;
  offsets: Record<string, number>;
  nbytes: number;
  sha256: string;
}

export interface Manifest {
  format: string;
  version: number;
  points_per_frame: number;
  binary_gripper: boolean;
  labels: string[];
  scenes: string[];
  demos: DemoEntry[];
}

export interface DemoArrays {
  entry: DemoEntry;
  points: Float32Array; // frames * points * 3
  labels: Uint8Array; // frames * points
  colors: Float32Array | null;
  states: Float64Array; // frames * 8
  actions: Float64Array; // frames * 8
  blobSha256: string;
}

export class DatasetFormatError extends Error {}

export function sha256Hex(data: Uint8Array): string {
  return createHash("sha256").update(data).digest("hex");
}

export function loadManifest(root: string): Manifest {
  let text: string;
  try {
    text = readFileSync(join(root, "manifest.json"), "utf8");
  } catch {
    throw new DatasetFormatError(`missing manifest under ${root}`);
  }
  const manifest = JSON.parse(text) as Manifest;
  if (manifest.format !== "dockaug-dataset") {
    throw new DatasetFormatError(`unexpected manifest format ${manifest.format}`);
  }
  return manifest;
}

function sliceView<T>(
  blob: Buffer,
  offset: number,
  count: number,
  make: (buf: ArrayBuffer, byteOffset: number, length: number) => T,
  bytesPer: number,
): T {
  if (offset + count * bytesPer > blob.byteLength) {
    throw new DatasetFormatError(
      `section at ${offset} (+${count * bytesPer}) exceeds blob of ${blob.byteLength} bytes`,
    );
  }
  // copy into a fresh ArrayBuffer so typed-array alignment always holds
  const copy = blob.subarray(offset, offset + count * bytesPer);
  const out = new ArrayBuffer(copy.byteLength);
  new Uint8Array(out).set(copy);
  return make(out, 0, count);
}

export function readDemoArrays(root: string, entry: DemoEntry): DemoArrays {
  const blob = readFileSync(join(root, entry.file));
  if (blob.byteLength !== entry.nbytes) {
    throw new DatasetFormatError(
      `${entry.file}: size ${blob.byteLength} does not match manifest nbytes ${entry.nbytes}`,
    );
  }
  const digest = sha256Hex(blob);
  if (digest !== entry.sha256) {
    throw new DatasetFormatError(`${entry.file}: sha256 mismatch vs manifest`);
  }
  const L = entry.frames;
  const N = entry.points;
  const points = sliceView(
    blob,
    entry.offsets["points"],
    L * N * 3,
    (b, o, n) => new Float32Array(b, o, n),
    4,
  );
  const labels = sliceView(
    blob,
    entry.offsets["labels"],
    L * N,
    (b, o, n) => new Uint8Array(b, o, n),
    1,
  );
  const colors = entry.has_colors
    ? sliceView(
        blob,
        entry.offsets["colors"],
        L * N * 3,
        (b, o, n) => new Float32Array(b, o, n),
        4,
      )
    : null;
  const states = sliceView(
    blob,
    entry.offsets["states"],
    L * 8,
    (b, o, n) => new Float64Array(b, o, n),
    8,
  );
  const actions = sliceView(
    blob,
    entry.offsets["actions"],
    L * 8,
    (b, o, n) => new Float64Array(b, o, n),
    8,
  );
  return { entry, points, labels, colors, states, actions, blobSha256: digest };
}

export function sortedDemoEntries(manifest: Manifest): DemoEntry[] {
  return [...manifest.demos].sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
}
