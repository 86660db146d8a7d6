import { unzlibSync } from "fflate";

/** Decoded still image. `indices` is set for palette PNGs (segmaps). */
export interface DecodedPng {
  width: number;
  height: number;
  colorType: number;
  rgb: Uint8Array;
  indices: Uint8Array | null;
}

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

export function base64ToBytes(b64: string): Uint8Array {
  const raw = atob(b64);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

function readU32(bytes: Uint8Array, at: number): number {
  return (
    ((bytes[at] << 24) | (bytes[at + 1] << 16) | (bytes[at + 2] << 8) | bytes[at + 3]) >>> 0
  );
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

function unfilter(data: Uint8Array, stride: number, height: number, bpp: number): Uint8Array {
  const out = new Uint8Array(stride * height);
  let at = 0;
  for (let y = 0; y < height; y++) {
    const filter = data[at];
    at += 1;
    const row = y * stride;
    const prev = row - stride;
    for (let x = 0; x < stride; x++) {
      const raw = data[at + x];
      const left = x >= bpp ? out[row + x - bpp] : 0;
      const up = y > 0 ? out[prev + x] : 0;
      const upLeft = y > 0 && x >= bpp ? out[prev + x - bpp] : 0;
      let value: number;
      switch (filter) {
        case 0:
          value = raw;
          break;
        case 1:
          value = raw + left;
          break;
        case 2:
          value = raw + up;
          break;
        case 3:
          value = raw + ((left + up) >> 1);
          break;
        case 4:
          value = raw + paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unsupported PNG filter ${filter}`);
      }
      out[row + x] = value & 0xff;
    }
    at += stride;
  }
  return out;
}

/** Expand packed 1-, 2-, or 4-bit samples to one byte each, MSB first. */
function unpackBits(
  rows: Uint8Array,
  width: number,
  height: number,
  stride: number,
  bitDepth: number,
): Uint8Array {
  if (bitDepth === 8) return rows;
  const out = new Uint8Array(width * height);
  const perByte = 8 / bitDepth;
  const mask = (1 << bitDepth) - 1;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const byte = rows[y * stride + Math.floor(x / perByte)];
      const shift = 8 - bitDepth * ((x % perByte) + 1);
      out[y * width + x] = (byte >> shift) & mask;
    }
  }
  return out;
}

/** Decode a non-interlaced RGB (8-bit) or palette (1/2/4/8-bit) PNG. */
export function decodePng(bytes: Uint8Array): DecodedPng {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  let palette: Uint8Array | null = null;
  const idat: Uint8Array[] = [];

  let at = 8;
  while (at + 8 <= bytes.length) {
    const length = readU32(bytes, at);
    const type = String.fromCharCode(bytes[at + 4], bytes[at + 5], bytes[at + 6], bytes[at + 7]);
    const data = bytes.subarray(at + 8, at + 8 + length);
    if (type === "IHDR") {
      width = readU32(data, 0);
      height = readU32(data, 4);
      bitDepth = data[8];
      colorType = data[9];
      if (data[12] !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "PLTE") {
      palette = new Uint8Array(data);
    } else if (type === "IDAT") {
      idat.push(new Uint8Array(data));
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }

  if (width <= 0 || height <= 0) throw new Error("missing IHDR");
  if (colorType !== 2 && colorType !== 3) {
    throw new Error(`unsupported color type ${colorType}`);
  }
  const validDepth = colorType === 2 ? bitDepth === 8 : [1, 2, 4, 8].includes(bitDepth);
  if (!validDepth) throw new Error(`unsupported bit depth ${bitDepth}`);

  const total = idat.reduce((n, part) => n + part.length, 0);
  const packed = new Uint8Array(total);
  let offset = 0;
  for (const part of idat) {
    packed.set(part, offset);
    offset += part.length;
  }
  const raw = unzlibSync(packed);

  if (colorType === 2) {
    const rgb = unfilter(raw, width * 3, height, 3);
    return { width, height, colorType, rgb, indices: null };
  }
  if (!palette) throw new Error("palette PNG without PLTE");
  const stride = Math.ceil((width * bitDepth) / 8);
  const indices = unpackBits(unfilter(raw, stride, height, 1), width, height, stride, bitDepth);
  const rgb = new Uint8Array(width * height * 3);
  for (let i = 0; i < indices.length; i++) {
    const p = indices[i] * 3;
    rgb[i * 3] = palette[p];
    rgb[i * 3 + 1] = palette[p + 1];
    rgb[i * 3 + 2] = palette[p + 2];
  }
  return { width, height, colorType, rgb, indices };
}

export function decodeBase64Png(b64: string): DecodedPng {
  return decodePng(base64ToBytes(b64));
}
