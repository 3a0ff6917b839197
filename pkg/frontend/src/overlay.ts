// Site-map overlay: the occupancy grid drawn to scale with dot layers per
// visible path.  Layers are computed as data (testable), then painted onto
// any CanvasRenderingContext2D-compatible surface; dot opacity accumulates
// so dwell density reads as darker spots.

import { CONFIRMED_COLOR, SUSPECT_COLOR, ViewState } from "./state.js";
import { PathPoint, SiteMapView } from "./types.js";

export interface Dot {
  x_m: number;
  y_m: number;
}

export interface PathLayer {
  bucket: string;
  color: string;
  dots: Dot[];
}

/** One layer per visible path: the confirmed case first (blue, drawn under),
 *  then each toggled suspected case (red). */
export function pathLayers(state: ViewState,
                           paths: Map<string, PathPoint[]>): PathLayer[] {
  const layers: PathLayer[] = [];
  const asDots = (points: PathPoint[] | undefined): Dot[] =>
    (points ?? []).map((p) => ({ x_m: p.x_m, y_m: p.y_m }));
  if (state.selectedBucket !== null) {
    layers.push({
      bucket: state.selectedBucket,
      color: CONFIRMED_COLOR,
      dots: asDots(paths.get(state.selectedBucket)),
    });
  }
  for (const bucket of state.visible) {
    if (bucket === state.selectedBucket) continue;
    layers.push({ bucket, color: SUSPECT_COLOR,
                  dots: asDots(paths.get(bucket)) });
  }
  return layers;
}

export interface Surface {
  fillStyle: string | CanvasGradient | CanvasPattern;
  globalAlpha: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

export const PLACEHOLDER_SITE: SiteMapView = {
  site_id: "unknown", width: 16, height: 16, resolution_m: 1.0,
  rows: Array.from({ length: 16 }, (_, r) =>
    r === 0 || r === 15 ? "#".repeat(16) : "#" + ".".repeat(14) + "#"),
};

const CELL_COLORS: Record<string, string> = {
  "#": "#334155",
  ".": "#f8fafc",
  "?": "#cbd5e1",
};

export function drawOverlay(ctx: Surface, site: SiteMapView,
                            layers: PathLayer[], pxPerMeter: number): void {
  const cell = site.resolution_m * pxPerMeter;
  ctx.globalAlpha = 1.0;
  for (let row = 0; row < site.rows.length; row++) {
    for (let col = 0; col < site.rows[row].length; col++) {
      ctx.fillStyle = CELL_COLORS[site.rows[row][col]] ?? "#ffffff";
      ctx.fillRect(col * cell, row * cell, cell, cell);
    }
  }
  for (const layer of layers) {
    ctx.fillStyle = layer.color;
    // Accumulating alpha: repeated dwell positions darken.
    ctx.globalAlpha = 0.35;
    for (const dot of layer.dots) {
      ctx.beginPath();
      ctx.arc(dot.x_m * pxPerMeter, dot.y_m * pxPerMeter,
              Math.max(2, pxPerMeter * 0.12), 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  ctx.globalAlpha = 1.0;
}
