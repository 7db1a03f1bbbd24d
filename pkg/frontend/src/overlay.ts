/**
 * Canvas compositing: windowed slice PNG underneath, label overlay PNG on
 * top (its alpha is baked in server side), prompt markers last.
 */
import type { PromptPoint } from './api.js';

const POSITIVE_COLOR = '#4dff4d';
const NEGATIVE_COLOR = '#ff4d4d';
const MARKER_RADIUS = 4;

export interface Sized {
  width: number;
  height: number;
}

export function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

/**
 * Size the canvas to the base image and paint base, then mask when given.
 * The canvas keeps one canvas pixel per slice pixel; any upscaling happens
 * in CSS so the backing store stays exact for coordinate mapping.
 */
export function drawComposite(
  canvas: HTMLCanvasElement,
  base: CanvasImageSource & Sized,
  mask: (CanvasImageSource & Sized) | null,
): void {
  canvas.width = base.width;
  canvas.height = base.height;
  const ctx = canvas.getContext('2d');
  if (!ctx) throw new Error('2d canvas unavailable');
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(base, 0, 0, canvas.width, canvas.height);
  if (mask) {
    ctx.drawImage(mask, 0, 0, canvas.width, canvas.height);
  }
}

/** Mark prompt points, green for foreground and red for background. */
export function drawPrompts(
  canvas: HTMLCanvasElement,
  points: PromptPoint[],
  sliceWidth: number,
  sliceHeight: number,
): void {
  if (points.length === 0) return;
  const ctx = canvas.getContext('2d');
  if (!ctx) throw new Error('2d canvas unavailable');
  const sx = canvas.width / sliceWidth;
  const sy = canvas.height / sliceHeight;
  for (const p of points) {
    ctx.beginPath();
    // center of the slice pixel, not its corner
    ctx.arc((p.col + 0.5) * sx, (p.row + 0.5) * sy, MARKER_RADIUS, 0, 2 * Math.PI);
    ctx.fillStyle = p.polarity ? POSITIVE_COLOR : NEGATIVE_COLOR;
    ctx.fill();
    ctx.lineWidth = 1;
    ctx.strokeStyle = '#111111';
    ctx.stroke();
  }
}

/**
 * Map a pointer position inside the canvas's displayed box to slice pixel
 * coordinates. Returns null when the position falls outside the slice.
 */
export function canvasToSlice(
  x: number,
  y: number,
  boxWidth: number,
  boxHeight: number,
  sliceWidth: number,
  sliceHeight: number,
): { row: number; col: number } | null {
  const col = Math.floor((x / boxWidth) * sliceWidth);
  const row = Math.floor((y / boxHeight) * sliceHeight);
  if (row < 0 || col < 0 || row >= sliceHeight || col >= sliceWidth) return null;
  return { row, col };
}
