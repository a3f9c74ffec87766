/** A point in stimulus-pixel space. */
export type StimulusPoint = { x: number; y: number };

/**
 * Maps viewport (client) coordinates onto stimulus pixels.
 *
 * The stage renders at native resolution by default, so the scale
 * factors are usually exactly 1; they are still computed from the
 * element's on-screen rect so a zoomed or CSS-scaled stage keeps the
 * coordinate contract.
 */
export class StageTransform {
  constructor(
    private readonly rect: () => DOMRect,
    readonly stimulusWidth: number,
    readonly stimulusHeight: number,
  ) {}

  /** Current stimulus-to-viewport scale (x axis). */
  scaleX(): number {
    return this.rect().width / this.stimulusWidth;
  }

  scaleY(): number {
    return this.rect().height / this.stimulusHeight;
  }

  /**
   * Viewport point to stimulus pixels, or null when the point falls
   * outside the stimulus area (such clicks must produce no event).
   */
  toStimulus(clientX: number, clientY: number): StimulusPoint | null {
    const r = this.rect();
    if (r.width <= 0 || r.height <= 0) return null;
    const x = ((clientX - r.left) / r.width) * this.stimulusWidth;
    const y = ((clientY - r.top) / r.height) * this.stimulusHeight;
    if (x < 0 || y < 0 || x >= this.stimulusWidth || y >= this.stimulusHeight) {
      return null;
    }
    return { x, y };
  }

  /** Bubble radius in device pixels for the current scale. */
  deviceRadius(stimulusRadius: number): number {
    return stimulusRadius * this.scaleX();
  }
}
