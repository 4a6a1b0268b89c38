/**
 * Client-side voxel grid plus the VXGB wire codec.
 *
 * Layout mirrors the server exactly: cubic occupancy indexed [z][y][x] with
 * x varying fastest, serialized as "VXGB" | version u32 LE | dims u32 x3 LE
 * | bit-packed cells (bit k of payload byte j is cell 8j+k).
 */

const MAGIC = "VXGB";
const VERSION = 1;
const HEADER_BYTES = 20;

export class VoxelGridData {
  readonly dims: number;
  readonly cells: Uint8Array; // one byte per cell, 0 or 1

  constructor(dims: number, cells?: Uint8Array) {
    if (!Number.isInteger(dims) || dims < 1) {
      throw new Error(`invalid grid dims ${dims}`);
    }
    this.dims = dims;
    this.cells = cells ?? new Uint8Array(dims * dims * dims);
    if (this.cells.length !== dims * dims * dims) {
      throw new Error("cell buffer does not match dims");
    }
  }

  static empty(dims: number): VoxelGridData {
    return new VoxelGridData(dims);
  }

  index(x: number, y: number, z: number): number {
    return (z * this.dims + y) * this.dims + x;
  }

  inBounds(x: number, y: number, z: number): boolean {
    const n = this.dims;
    return x >= 0 && x < n && y >= 0 && y < n && z >= 0 && z < n;
  }

  get(x: number, y: number, z: number): boolean {
    return this.cells[this.index(x, y, z)] === 1;
  }

  set(x: number, y: number, z: number, occupied: boolean): void {
    this.cells[this.index(x, y, z)] = occupied ? 1 : 0;
  }

  count(): number {
    let total = 0;
    for (const v of this.cells) total += v;
    return total;
  }

  clone(): VoxelGridData {
    return new VoxelGridData(this.dims, this.cells.slice());
  }

  equals(other: VoxelGridData): boolean {
    if (other.dims !== this.dims) return false;
    return this.cells.every((v, i) => v === other.cells[i]);
  }

  /** Occupied cell coordinates, for rendering. */
  occupiedCells(): Array<[number, number, number]> {
    const out: Array<[number, number, number]> = [];
    const n = this.dims;
    let i = 0;
    for (let z = 0; z < n; z++) {
      for (let y = 0; y < n; y++) {
        for (let x = 0; x < n; x++, i++) {
          if (this.cells[i] === 1) out.push([x, y, z]);
        }
      }
    }
    return out;
  }

  toVxgb(): Uint8Array {
    const n = this.dims;
    const nCells = n * n * n;
    const payloadBytes = Math.ceil(nCells / 8);
    const buf = new Uint8Array(HEADER_BYTES + payloadBytes);
    const view = new DataView(buf.buffer);
    for (let i = 0; i < 4; i++) buf[i] = MAGIC.charCodeAt(i);
    view.setUint32(4, VERSION, true);
    view.setUint32(8, n, true);
    view.setUint32(12, n, true);
    view.setUint32(16, n, true);
    for (let i = 0; i < nCells; i++) {
      if (this.cells[i] === 1) {
        buf[HEADER_BYTES + (i >> 3)] |= 1 << (i & 7);
      }
    }
    return buf;
  }

  static fromVxgb(data: Uint8Array): VoxelGridData {
    if (data.length < HEADER_BYTES) throw new Error("truncated VXGB header");
    for (let i = 0; i < 4; i++) {
      if (data[i] !== MAGIC.charCodeAt(i)) throw new Error("bad VXGB magic");
    }
    const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
    const version = view.getUint32(4, true);
    if (version !== VERSION) throw new Error(`unsupported VXGB version ${version}`);
    const d = view.getUint32(8, true);
    const h = view.getUint32(12, true);
    const w = view.getUint32(16, true);
    if (d !== h || h !== w || d === 0) throw new Error(`non-cubic dims ${d}x${h}x${w}`);
    const nCells = d * h * w;
    if (data.length < HEADER_BYTES + Math.ceil(nCells / 8)) {
      throw new Error("truncated VXGB payload");
    }
    const cells = new Uint8Array(nCells);
    for (let i = 0; i < nCells; i++) {
      cells[i] = (data[HEADER_BYTES + (i >> 3)] >> (i & 7)) & 1;
    }
    return new VoxelGridData(d, cells);
  }

  toBase64(): string {
    return bytesToBase64(this.toVxgb());
  }

  static fromBase64(b64: string): VoxelGridData {
    return VoxelGridData.fromVxgb(base64ToBytes(b64));
  }
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x2000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
