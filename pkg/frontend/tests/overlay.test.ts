import { describe, expect, it } from 'vitest';

import { canvasToSlice, drawComposite, drawPrompts } from '../src/overlay.js';

/** Minimal 2d-context stand-in that records calls; enough for node tests. */
function recordingCanvas(contextAvailable = true) {
  const calls: unknown[][] = [];
  const ctx = {
    imageSmoothingEnabled: true,
    fillStyle: '',
    strokeStyle: '',
    lineWidth: 0,
    drawImage: (...args: unknown[]) => calls.push(['drawImage', ...args]),
    beginPath: () => calls.push(['beginPath']),
    arc: (...args: unknown[]) => calls.push(['arc', ...args]),
    fill() {
      calls.push(['fill', this.fillStyle]);
    },
    stroke() {
      calls.push(['stroke', this.strokeStyle]);
    },
  };
  const canvas = {
    width: 0,
    height: 0,
    getContext: () => (contextAvailable ? ctx : null),
  };
  return { canvas: canvas as unknown as HTMLCanvasElement, ctx, calls };
}

const image = (width: number, height: number) =>
  ({ width, height }) as unknown as CanvasImageSource & { width: number; height: number };

describe('drawComposite', () => {
  it('sizes the canvas to the base image and paints base then mask', () => {
    const { canvas, ctx, calls } = recordingCanvas();
    const base = image(4, 3);
    const mask = image(4, 3);

    drawComposite(canvas, base, mask);

    expect(canvas.width).toBe(4);
    expect(canvas.height).toBe(3);
    expect(ctx.imageSmoothingEnabled).toBe(false);
    expect(calls).toEqual([
      ['drawImage', base, 0, 0, 4, 3],
      ['drawImage', mask, 0, 0, 4, 3],
    ]);
  });

  it('paints only the base when no mask is available', () => {
    const { canvas, calls } = recordingCanvas();
    const base = image(2, 2);

    drawComposite(canvas, base, null);

    expect(calls).toEqual([['drawImage', base, 0, 0, 2, 2]]);
  });

  it('throws when the 2d context is unavailable', () => {
    const { canvas } = recordingCanvas(false);
    expect(() => drawComposite(canvas, image(1, 1), null)).toThrow('2d canvas unavailable');
  });
});

describe('drawPrompts', () => {
  it('marks pixel centers, green foreground and red background', () => {
    const { canvas, calls } = recordingCanvas();
    canvas.width = 64;
    canvas.height = 48; // twice the slice size in both directions

    drawPrompts(
      canvas,
      [
        { row: 0, col: 0, polarity: true },
        { row: 23, col: 31, polarity: false },
      ],
      32,
      24,
    );

    const arcs = calls.filter((c) => c[0] === 'arc');
    expect(arcs).toHaveLength(2);
    expect(arcs[0].slice(1, 3)).toEqual([1, 1]); // (0 + 0.5) * 2
    expect(arcs[1].slice(1, 3)).toEqual([63, 47]);

    const fills = calls.filter((c) => c[0] === 'fill').map((c) => c[1]);
    expect(fills).toEqual(['#4dff4d', '#ff4d4d']);
  });

  it('does not touch the context when there are no points', () => {
    const { canvas, calls } = recordingCanvas();
    drawPrompts(canvas, [], 8, 8);
    expect(calls).toEqual([]);
  });
});

describe('canvasToSlice', () => {
  it('maps positions at native resolution', () => {
    expect(canvasToSlice(0.5, 2.7, 10, 8, 10, 8)).toEqual({ row: 2, col: 0 });
  });

  it('maps positions on a CSS-scaled canvas', () => {
    // displayed box 64x48 for a 32x24 slice: every slice pixel covers 2x2
    expect(canvasToSlice(33, 1, 64, 48, 32, 24)).toEqual({ row: 0, col: 16 });
    expect(canvasToSlice(63.9, 47.9, 64, 48, 32, 24)).toEqual({ row: 23, col: 31 });
  });

  it('handles anisotropic scaling per axis', () => {
    expect(canvasToSlice(95, 49, 100, 50, 10, 25)).toEqual({ row: 24, col: 9 });
  });

  it('rejects positions outside the slice', () => {
    expect(canvasToSlice(64, 10, 64, 48, 32, 24)).toBeNull();
    expect(canvasToSlice(10, 48, 64, 48, 32, 24)).toBeNull();
    expect(canvasToSlice(-0.1, 10, 64, 48, 32, 24)).toBeNull();
    expect(canvasToSlice(10, -0.1, 64, 48, 32, 24)).toBeNull();
  });
});
