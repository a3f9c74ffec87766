import { describe, expect, it } from "vitest";
import { StageTransform } from "../src/coords.js";

function fixedRect(left: number, top: number, width: number, height: number) {
  return () =>
    ({
      x: left,
      y: top,
      left,
      top,
      width,
      height,
      right: left + width,
      bottom: top + height,
      toJSON: () => ({}),
    }) as DOMRect;
}

describe("StageTransform", () => {
  it("maps viewport points to stimulus pixels at native scale", () => {
    const t = new StageTransform(fixedRect(10, 20, 200, 100), 200, 100);
    expect(t.scaleX()).toBe(1);
    expect(t.scaleY()).toBe(1);
    expect(t.toStimulus(133, 65)).toEqual({ x: 123, y: 45 });
    expect(t.toStimulus(10, 20)).toEqual({ x: 0, y: 0 });
  });

  it("divides out a CSS scale factor", () => {
    const t = new StageTransform(fixedRect(10, 20, 400, 200), 200, 100);
    expect(t.toStimulus(10 + 246, 20 + 90)).toEqual({ x: 123, y: 45 });
    expect(t.deviceRadius(16)).toBe(32);
  });

  it("returns null outside the stimulus area", () => {
    const t = new StageTransform(fixedRect(10, 20, 200, 100), 200, 100);
    expect(t.toStimulus(9, 50)).toBeNull();
    expect(t.toStimulus(100, 19)).toBeNull();
    expect(t.toStimulus(500, 50)).toBeNull();
    expect(t.toStimulus(100, 300)).toBeNull();
  });

  it("treats the right and bottom edges as outside", () => {
    const t = new StageTransform(fixedRect(0, 0, 200, 100), 200, 100);
    expect(t.toStimulus(200, 50)).toBeNull();
    expect(t.toStimulus(50, 100)).toBeNull();
    expect(t.toStimulus(199.5, 99.5)).toEqual({ x: 199.5, y: 99.5 });
  });

  it("rejects everything when the stage has no size", () => {
    const t = new StageTransform(fixedRect(0, 0, 0, 0), 200, 100);
    expect(t.toStimulus(0, 0)).toBeNull();
  });

  it("keeps fractional pixel positions", () => {
    const t = new StageTransform(fixedRect(0, 0, 200, 100), 200, 100);
    expect(t.toStimulus(12.25, 7.75)).toEqual({ x: 12.25, y: 7.75 });
  });
});
