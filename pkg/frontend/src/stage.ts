import type { Raster } from "./raster.js";

/**
 * Where frames get drawn. The participant and monitor views depend on
 * this interface rather than on canvas directly, so the rendering
 * logic stays testable where no real 2D context exists.
 */
export interface Stage {
  readonly element: HTMLElement;
  setSize(width: number, height: number): void;
  show(frame: Raster): void;
}

/** Canvas-backed stage rendering at native stimulus resolution. */
export class CanvasStage implements Stage {
  readonly element: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;

  constructor(canvas: HTMLCanvasElement) {
    this.element = canvas;
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("2D canvas context unavailable");
    this.ctx = ctx;
  }

  setSize(width: number, height: number): void {
    this.element.width = width;
    this.element.height = height;
  }

  show(frame: Raster): void {
    if (this.element.width !== frame.width || this.element.height !== frame.height) {
      this.setSize(frame.width, frame.height);
    }
    const image = new ImageData(
      new Uint8ClampedArray(frame.data),
      frame.width,
      frame.height,
    );
    this.ctx.putImageData(image, 0, 0);
  }
}

/** Decode an image blob into a raw RGBA raster. Browser only. */
export async function rasterFromBlob(blob: Blob): Promise<Raster> {
  const bitmap = await createImageBitmap(blob);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2D canvas context unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { width: bitmap.width, height: bitmap.height, data: data.data };
}
