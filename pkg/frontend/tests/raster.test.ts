import { describe, expect, it } from "vitest";
import {
  cloneRaster,
  compositeBubble,
  frameHash,
  makeRaster,
  stampMarker,
} from "../src/raster.js";
import { noisy, solid } from "./helpers.js";

function pixel(r: { width: number; data: Uint8ClampedArray }, x: number, y: number) {
  const i = (y * r.width + x) * 4;
  return [r.data[i], r.data[i + 1], r.data[i + 2], r.data[i + 3]];
}

describe("compositeBubble", () => {
  it("reveals a sharp disk and leaves the rest of the base", () => {
    const base = solid(21, 21, [0, 0, 0, 255]);
    const sharp = solid(21, 21, [255, 255, 255, 255]);
    const out = compositeBubble(base, sharp, 10.5, 10.5, 3);
    expect(pixel(out, 10, 10)).toEqual([255, 255, 255, 255]);
    expect(pixel(out, 10, 8)).toEqual([255, 255, 255, 255]);
    expect(pixel(out, 10, 7)).toEqual([255, 255, 255, 255]);
    expect(pixel(out, 10, 6)).toEqual([0, 0, 0, 255]);
    expect(pixel(out, 0, 0)).toEqual([0, 0, 0, 255]);
    expect(pixel(out, 20, 20)).toEqual([0, 0, 0, 255]);
  });

  it("does not mutate its inputs", () => {
    const base = solid(9, 9, [10, 20, 30, 255]);
    const sharp = solid(9, 9, [200, 200, 200, 255]);
    const before = frameHash(base);
    compositeBubble(base, sharp, 4, 4, 2);
    expect(frameHash(base)).toBe(before);
    expect(pixel(sharp, 4, 4)).toEqual([200, 200, 200, 255]);
  });

  it("clips a bubble hanging over the edge", () => {
    const base = solid(10, 10, [0, 0, 0, 255]);
    const sharp = solid(10, 10, [255, 0, 0, 255]);
    const out = compositeBubble(base, sharp, 0, 0, 4);
    expect(pixel(out, 0, 0)).toEqual([255, 0, 0, 255]);
    expect(pixel(out, 9, 9)).toEqual([0, 0, 0, 255]);
  });

  it("rejects mismatched raster sizes", () => {
    expect(() =>
      compositeBubble(makeRaster(4, 4), makeRaster(5, 4), 1, 1, 1),
    ).toThrow(/size mismatch/);
  });

  it("is deterministic for identical inputs", () => {
    const base = noisy(32, 24, 7);
    const sharp = noisy(32, 24, 11);
    const a = compositeBubble(base, sharp, 15.5, 11.25, 6);
    const b = compositeBubble(base, sharp, 15.5, 11.25, 6);
    expect(frameHash(a)).toBe(frameHash(b));
  });
});

describe("stampMarker", () => {
  it("paints a clamped solid square", () => {
    const r = solid(8, 8, [0, 0, 0, 255]);
    stampMarker(r, 0, 0, 2, [255, 64, 64, 255]);
    expect(pixel(r, 0, 0)).toEqual([255, 64, 64, 255]);
    expect(pixel(r, 2, 2)).toEqual([255, 64, 64, 255]);
    expect(pixel(r, 3, 3)).toEqual([0, 0, 0, 255]);
  });
});

describe("frameHash", () => {
  it("matches for byte-identical frames", () => {
    const a = noisy(16, 16, 3);
    expect(frameHash(a)).toBe(frameHash(cloneRaster(a)));
  });

  it("changes when any byte changes", () => {
    const a = noisy(16, 16, 3);
    const b = cloneRaster(a);
    b.data[500] = (b.data[500] + 1) & 0xff;
    expect(frameHash(b)).not.toBe(frameHash(a));
  });

  it("distinguishes transposed dimensions with identical bytes", () => {
    const wide = solid(6, 2, [9, 9, 9, 9]);
    const tall = solid(2, 6, [9, 9, 9, 9]);
    expect(frameHash(wide)).not.toBe(frameHash(tall));
  });
});
