/**
 * Client-side binary PNM (P5 gray / P6 color, maxval 255) encode/decode,
 * kept symmetric with the service's wire format so no image libraries are
 * needed on either side.
 */

export interface PnmImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** row-major samples, channels interleaved, length = w*h*channels */
  samples: Uint8Array;
}

export function encodePnm(image: PnmImage): Uint8Array {
  const { width, height, channels, samples } = image;
  if (samples.length !== width * height * channels) {
    throw new Error(`sample count ${samples.length} != ${width}x${height}x${channels}`);
  }
  const magic = channels === 1 ? "P5" : "P6";
  const header = new TextEncoder().encode(`${magic}\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + samples.length);
  out.set(header, 0);
  out.set(samples, header.length);
  return out;
}

export function decodePnm(bytes: Uint8Array): PnmImage {
  const reader = new HeaderReader(bytes);
  const magic = reader.token();
  let channels: 1 | 3;
  if (magic === "P5") channels = 1;
  else if (magic === "P6") channels = 3;
  else throw new Error(`bad magic ${JSON.stringify(magic)}: only binary P5/P6 supported`);

  const width = reader.int();
  const height = reader.int();
  const maxval = reader.int();
  if (maxval !== 255) throw new Error(`maxval ${maxval} unsupported (must be 255)`);

  const start = reader.pos + 1; // single whitespace byte after maxval
  const expected = width * height * channels;
  if (bytes.length < start + expected) {
    throw new Error(`short pixel data: expected ${expected} bytes`);
  }
  return { width, height, channels, samples: bytes.slice(start, start + expected) };
}

class HeaderReader {
  pos = 0;

  constructor(private bytes: Uint8Array) {}

  token(): string {
    // skip whitespace and # comments
    while (this.pos < this.bytes.length) {
      const b = this.bytes[this.pos];
      if (b === 0x23) {
        while (this.pos < this.bytes.length && this.bytes[this.pos] !== 0x0a) this.pos++;
      } else if (isSpace(b)) {
        this.pos++;
      } else {
        break;
      }
    }
    const start = this.pos;
    while (this.pos < this.bytes.length && !isSpace(this.bytes[this.pos])) this.pos++;
    if (start === this.pos) throw new Error("header ended early");
    return new TextDecoder().decode(this.bytes.subarray(start, this.pos));
  }

  int(): number {
    const value = Number(this.token());
    if (!Number.isInteger(value)) throw new Error("non-numeric header token");
    return value;
  }
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d || b === 0x0b || b === 0x0c;
}

/** RGBA canvas pixels -> PNM samples (luma for 1 channel, drop alpha for 3). */
export function rgbaToSamples(rgba: Uint8ClampedArray, channels: 1 | 3): Uint8Array {
  const pixels = rgba.length / 4;
  const out = new Uint8Array(pixels * channels);
  for (let i = 0; i < pixels; i++) {
    const r = rgba[4 * i];
    const g = rgba[4 * i + 1];
    const b = rgba[4 * i + 2];
    if (channels === 1) {
      out[i] = Math.round(0.299 * r + 0.587 * g + 0.114 * b);
    } else {
      out[3 * i] = r;
      out[3 * i + 1] = g;
      out[3 * i + 2] = b;
    }
  }
  return out;
}

/** PNM samples -> opaque RGBA for drawing on a canvas. */
export function samplesToRgba(image: PnmImage): Uint8ClampedArray<ArrayBuffer> {
  const pixels = image.width * image.height;
  const out = new Uint8ClampedArray(pixels * 4);
  for (let i = 0; i < pixels; i++) {
    const r = image.channels === 1 ? image.samples[i] : image.samples[3 * i];
    const g = image.channels === 1 ? image.samples[i] : image.samples[3 * i + 1];
    const b = image.channels === 1 ? image.samples[i] : image.samples[3 * i + 2];
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = 255;
  }
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
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
