// Minimal .npy / .npz codec. Arrays are C-order little-endian; the .npz
// container is a standard zip with deflate entries, so numpy's np.load can
// read the output directly.

import { deflateRawSync, inflateRawSync } from "node:zlib";

export type NpyData = Float32Array | Float64Array | Uint8Array | BigInt64Array;

export interface NpyArray {
  dtype: "<f4" | "<f8" | "|u1" | "<i8";
  shape: number[];
  data: NpyData;
}

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

function dtypeOf(data: NpyData): NpyArray["dtype"] {
  if (data instanceof Float32Array) return "<f4";
  if (data instanceof Float64Array) return "<f8";
  if (data instanceof Uint8Array) return "|u1";
  return "<i8";
}

export function encodeNpy(data: NpyData, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape ${shape} does not match length ${data.length}`);
  }
  const dict = `{'descr': '${dtypeOf(data)}', 'fortran_order': False, 'shape': (${
    shape.length === 1 ? `${shape[0]},` : shape.join(", ")
  }), }`;
  // pad so the data block starts on a 64-byte boundary
  let header = dict;
  const base = MAGIC.length + 2 + 2 + header.length + 1;
  const pad = (64 - (base % 64)) % 64;
  header = header + " ".repeat(pad) + "\n";
  const head = Buffer.alloc(MAGIC.length + 4 + header.length);
  MAGIC.copy(head, 0);
  head[6] = 1; // version 1.0
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  head.write(header, 10, "latin1");
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([head, payload]);
}

export function decodeNpy(buf: Buffer): NpyArray {
  if (!buf.subarray(0, 6).equals(MAGIC)) {
    throw new Error("not an npy payload");
  }
  const headerLen = buf.readUInt16LE(8);
  const header = buf.subarray(10, 10 + headerLen).toString("latin1");
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1] ?? "";
  if (fortran !== "False") {
    throw new Error("fortran-order arrays are not supported");
  }
  const shape = shapeText
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const body = buf.subarray(10 + headerLen);
  const copy = new ArrayBuffer(body.byteLength);
  new Uint8Array(copy).set(body);
  let data: NpyData;
  switch (descr) {
    case "<f4":
      data = new Float32Array(copy, 0, count);
      break;
    case "<f8":
      data = new Float64Array(copy, 0, count);
      break;
    case "|u1":
      data = new Uint8Array(copy, 0, count);
      break;
    case "<i8":
      data = new BigInt64Array(copy, 0, count);
      break;
    default:
      throw new Error(`unsupported dtype ${descr}`);
  }
  return { dtype: descr, shape, data };
}

// ---------------------------------------------------------------------------
// zip container (stored names, deflate-compressed payloads)

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

interface ZipEntry {
  name: string;
  crc: number;
  compressed: Buffer;
  size: number;
  offset: number;
}

export function writeZip(entries: Array<{ name: string; data: Buffer }>): Buffer {
  const chunks: Buffer[] = [];
  const records: ZipEntry[] = [];
  let offset = 0;
  for (const { name, data } of entries) {
    const compressed = deflateRawSync(data);
    const nameBuf = Buffer.from(name, "latin1");
    const local = Buffer.alloc(30);
    local.writeUInt32LE(0x04034b50, 0);
    local.writeUInt16LE(20, 4); // version needed
    local.writeUInt16LE(0, 6); // flags
    local.writeUInt16LE(8, 8); // deflate
    local.writeUInt16LE(0, 10); // time
    local.writeUInt16LE(0, 12); // date
    local.writeUInt32LE(crc32(data), 14);
    local.writeUInt32LE(compressed.length, 18);
    local.writeUInt32LE(data.length, 22);
    local.writeUInt16LE(nameBuf.length, 26);
    local.writeUInt16LE(0, 28);
    chunks.push(local, nameBuf, compressed);
    records.push({
      name,
      crc: crc32(data),
      compressed,
      size: data.length,
      offset,
    });
    offset += local.length + nameBuf.length + compressed.length;
  }
  const centralStart = offset;
  for (const rec of records) {
    const nameBuf = Buffer.from(rec.name, "latin1");
    const central = Buffer.alloc(46);
    central.writeUInt32LE(0x02014b50, 0);
    central.writeUInt16LE(20, 4);
    central.writeUInt16LE(20, 6);
    central.writeUInt16LE(0, 8);
    central.writeUInt16LE(8, 10);
    central.writeUInt16LE(0, 12);
    central.writeUInt16LE(0, 14);
    central.writeUInt32LE(rec.crc, 16);
    central.writeUInt32LE(rec.compressed.length, 20);
    central.writeUInt32LE(rec.size, 24);
    central.writeUInt16LE(nameBuf.length, 28);
    central.writeUInt32LE(rec.offset, 42);
    chunks.push(central, nameBuf);
    offset += central.length + nameBuf.length;
  }
  const end = Buffer.alloc(22);
  end.writeUInt32LE(0x06054b50, 0);
  end.writeUInt16LE(records.length, 8);
  end.writeUInt16LE(records.length, 10);
  end.writeUInt32LE(offset - centralStart, 12);
  end.writeUInt32LE(centralStart, 16);
  chunks.push(end);
  return Buffer.concat(chunks);
}

export function readZip(buf: Buffer): Map<string, Buffer> {
  // locate the end-of-central-directory record
  let eocd = -1;
  for (let i = buf.length - 22; i >= 0; i--) {
    if (buf.readUInt32LE(i) === 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw new Error("not a zip archive");
  const count = buf.readUInt16LE(eocd + 10);
  let cursor = buf.readUInt32LE(eocd + 16);
  const out = new Map<string, Buffer>();
  for (let i = 0; i < count; i++) {
    if (buf.readUInt32LE(cursor) !== 0x02014b50) {
      throw new Error("bad central directory record");
    }
    const method = buf.readUInt16LE(cursor + 10);
    const crc = buf.readUInt32LE(cursor + 16);
    const compressedSize = buf.readUInt32LE(cursor + 20);
    const nameLen = buf.readUInt16LE(cursor + 28);
    const extraLen = buf.readUInt16LE(cursor + 30);
    const commentLen = buf.readUInt16LE(cursor + 32);
    const localOffset = buf.readUInt32LE(cursor + 42);
    const name = buf.subarray(cursor + 46, cursor + 46 + nameLen).toString("latin1");
    const localNameLen = buf.readUInt16LE(localOffset + 26);
    const localExtraLen = buf.readUInt16LE(localOffset + 28);
    const dataStart = localOffset + 30 + localNameLen + localExtraLen;
    const payload = buf.subarray(dataStart, dataStart + compressedSize);
    const raw =
      method === 8 ? inflateRawSync(payload) : method === 0 ? Buffer.from(payload) : null;
    if (raw === null) throw new Error(`unsupported compression method ${method}`);
    if (crc32(raw) !== crc) throw new Error(`crc mismatch for ${name}`);
    out.set(name, raw);
    cursor += 46 + nameLen + extraLen + commentLen;
  }
  return out;
}

export function writeNpz(arrays: Record<string, { data: NpyData; shape: number[] }>): Buffer {
  const entries = Object.entries(arrays).map(([name, arr]) => ({
    name: `${name}.npy`,
    data: encodeNpy(arr.data, arr.shape),
  }));
  return writeZip(entries);
}

export function readNpz(buf: Buffer): Map<string, NpyArray> {
  const out = new Map<string, NpyArray>();
  for (const [name, payload] of readZip(buf)) {
    out.set(name.replace(/\.npy$/, ""), decodeNpy(payload));
  }
  return out;
}
