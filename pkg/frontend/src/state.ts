// Console view state, fully round-trippable through the URL hash so deep
// links reproduce the exact view.

export const CONFIRMED_COLOR = "#2563eb"; // blue
export const SUSPECT_COLOR = "#dc2626";   // red

export const FOURTEEN_DAYS_S = 14 * 24 * 3600;

export interface ViewState {
  query: string;
  selectedBucket: string | null;
  siteId: string | null;
  windowStartS: number | null;
  windowEndS: number | null;
  /** suspected-case buckets whose paths are toggled on (the confirmed
   *  case's own path is always shown) */
  visible: string[];
}

export function emptyState(): ViewState {
  return { query: "", selectedBucket: null, siteId: null,
           windowStartS: null, windowEndS: null, visible: [] };
}

/** Default window: the last 14 days of stored data. */
export function defaultWindow(latestSampleS: number): [number, number] {
  return [latestSampleS - FOURTEEN_DAYS_S, latestSampleS];
}

export function pathColor(state: ViewState, bucket: string): string {
  return bucket === state.selectedBucket ? CONFIRMED_COLOR : SUSPECT_COLOR;
}

export function toggleVisible(state: ViewState, bucket: string): ViewState {
  const visible = state.visible.includes(bucket)
    ? state.visible.filter((b) => b !== bucket)
    : [...state.visible, bucket];
  return { ...state, visible };
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.query) params.set("q", state.query);
  if (state.selectedBucket !== null) params.set("bucket", state.selectedBucket);
  if (state.siteId !== null) params.set("site", state.siteId);
  if (state.windowStartS !== null) params.set("start", String(state.windowStartS));
  if (state.windowEndS !== null) params.set("end", String(state.windowEndS));
  if (state.visible.length) params.set("show", state.visible.join(","));
  return params.toString();
}

export function decodeState(hash: string): ViewState {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const num = (key: string): number | null =>
    params.has(key) ? Number(params.get(key)) : null;
  return {
    query: params.get("q") ?? "",
    selectedBucket: params.get("bucket"),
    siteId: params.get("site"),
    windowStartS: num("start"),
    windowEndS: num("end"),
    visible: params.get("show")?.split(",").filter(Boolean) ?? [],
  };
}
