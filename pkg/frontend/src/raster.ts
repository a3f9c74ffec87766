/**
 * Plain RGBA pixel buffers and the compositing used by both the live
 * participant stage and the monitor replay. Kept free of canvas so the
 * same code runs headless; the DOM layer only copies Rasters in and out
 * of ImageData.
 */

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8ClampedArray;
}

export function makeRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

/** Uniform fill, handy for placeholders and tests. */
export function fillRaster(r: Raster, rgba: [number, number, number, number]): Raster {
  for (let i = 0; i < r.data.length; i += 4) {
    r.data[i] = rgba[0];
    r.data[i + 1] = rgba[1];
    r.data[i + 2] = rgba[2];
    r.data[i + 3] = rgba[3];
  }
  return r;
}

export function cloneRaster(r: Raster): Raster {
  return { width: r.width, height: r.height, data: new Uint8ClampedArray(r.data) };
}

function sameSize(a: Raster, b: Raster): void {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error(
      `raster size mismatch: ${a.width}x${a.height} vs ${b.width}x${b.height}`,
    );
  }
}

/**
 * Copy a sharp disk out of `sharp` onto a copy of `base`.
 *
 * The disk covers pixels whose centers lie within `radius` of (cx, cy)
 * in stimulus coordinates. A hard edge keeps the output an exact
 * function of its inputs, which the replay hashing relies on.
 */
export function compositeBubble(
  base: Raster,
  sharp: Raster,
  cx: number,
  cy: number,
  radius: number,
): Raster {
  sameSize(base, sharp);
  const out = cloneRaster(base);
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(base.width - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(base.height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    const dy = y + 0.5 - cy;
    for (let x = x0; x <= x1; x++) {
      const dx = x + 0.5 - cx;
      if (dx * dx + dy * dy <= r2) {
        const i = (y * base.width + x) * 4;
        out.data[i] = sharp.data[i];
        out.data[i + 1] = sharp.data[i + 1];
        out.data[i + 2] = sharp.data[i + 2];
        out.data[i + 3] = sharp.data[i + 3];
      }
    }
  }
  return out;
}

/** Stamp a small solid marker square, used for cumulative click markers. */
export function stampMarker(
  r: Raster,
  cx: number,
  cy: number,
  halfSize: number,
  rgba: [number, number, number, number],
): void {
  const x0 = Math.max(0, Math.round(cx - halfSize));
  const x1 = Math.min(r.width - 1, Math.round(cx + halfSize));
  const y0 = Math.max(0, Math.round(cy - halfSize));
  const y1 = Math.min(r.height - 1, Math.round(cy + halfSize));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const i = (y * r.width + x) * 4;
      r.data[i] = rgba[0];
      r.data[i + 1] = rgba[1];
      r.data[i + 2] = rgba[2];
      r.data[i + 3] = rgba[3];
    }
  }
}

/**
 * FNV-1a over dimensions and bytes. Two frames hash equal iff every
 * pixel matches, which is how replay purity is checked.
 */
export function frameHash(r: Raster): string {
  let h = 0x811c9dc5;
  const mix = (byte: number) => {
    h ^= byte;
    h = Math.imul(h, 0x01000193);
  };
  mix(r.width & 0xff);
  mix((r.width >> 8) & 0xff);
  mix(r.height & 0xff);
  mix((r.height >> 8) & 0xff);
  for (let i = 0; i < r.data.length; i++) mix(r.data[i]);
  return (h >>> 0).toString(16).padStart(8, "0");
}
