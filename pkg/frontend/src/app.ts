// Browser bootstrap: URL hash <-> state, API fetches, view mounting, and
// the canvas overlay.  All state changes funnel through update() so the
// hash always reproduces the current view.

import { ApiClient, ApiError } from "./api.js";
import { drawOverlay, pathLayers, PLACEHOLDER_SITE } from "./overlay.js";
import { mount, VNode } from "./render.js";
import { decodeState, defaultWindow, encodeState, toggleVisible,
         ViewState } from "./state.js";
import { ContactRow, Device, PathPoint, SiteMapView } from "./types.js";
import { contactTableView, errorBannerView, searchFormView,
         searchResultsView, validationView } from "./views.js";

const api = new ApiClient("");

let state: ViewState = decodeState(location.hash);
let devices: Device[] = [];
let contacts: ContactRow[] = [];
let paths = new Map<string, PathPoint[]>();
let site: SiteMapView | null = null;
let banner: VNode | null = null;

function setHash(): void {
  const encoded = encodeState(state);
  if (location.hash.replace(/^#/, "") !== encoded) {
    location.hash = encoded;
  }
}

function update(next: ViewState): void {
  state = next;
  setHash();
  void render();
}

async function runSearch(): Promise<void> {
  const input = document.getElementById("search-input") as HTMLInputElement | null;
  const query = (input?.value ?? state.query).trim();
  banner = null;
  if (!query) {
    banner = validationView("Enter a MAC address or fingerprint fragment.");
    void render();
    return;
  }
  state = { ...state, query };
  setHash();
  try {
    devices = await api.searchDevices(query);
  } catch (err) {
    banner = errorBannerView(`Search failed: ${String(err)}`, () => void runSearch());
  }
  void render();
}

async function selectBucket(bucket: string): Promise<void> {
  let next: ViewState = { ...state, selectedBucket: bucket, visible: [] };
  try {
    const fullPath = await api.path(bucket);
    if (fullPath.length) {
      const latest = fullPath[fullPath.length - 1];
      next = { ...next, siteId: next.siteId ?? latest.site_id };
      if (next.windowStartS === null || next.windowEndS === null) {
        const [start, end] = defaultWindow(latest.t_ns / 1e9);
        next = { ...next, windowStartS: start, windowEndS: end };
      }
    }
  } catch (err) {
    banner = errorBannerView(`Path load failed: ${String(err)}`,
      () => void selectBucket(bucket));
  }
  update(next);
}

async function refreshData(): Promise<void> {
  contacts = [];
  paths = new Map();
  if (state.selectedBucket === null) return;
  const startS = state.windowStartS ?? undefined;
  const endS = state.windowEndS ?? undefined;
  try {
    contacts = await api.contacts(state.selectedBucket, startS, endS);
    const wanted = [state.selectedBucket, ...state.visible];
    for (const bucket of wanted) {
      const points = await api.path(
        bucket, state.siteId ?? undefined,
        startS === undefined ? undefined : Math.floor(startS * 1e9),
        endS === undefined ? undefined : Math.floor(endS * 1e9));
      paths.set(bucket, points);
    }
    if (state.siteId !== null && site?.site_id !== state.siteId) {
      try {
        site = await api.siteMap(state.siteId);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) {
          site = null; // placeholder grid stands in
        } else {
          throw err;
        }
      }
    }
  } catch (err) {
    banner = errorBannerView(`Load failed: ${String(err)}`,
      () => void render());
  }
}

function redrawOverlay(): void {
  const canvas = document.getElementById("overlay") as HTMLCanvasElement | null;
  if (!canvas) return;
  const shown = site ?? PLACEHOLDER_SITE;
  const pxPerMeter = Math.max(4, Math.floor(
    900 / (shown.width * shown.resolution_m)));
  canvas.width = shown.width * shown.resolution_m * pxPerMeter;
  canvas.height = shown.height * shown.resolution_m * pxPerMeter;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  drawOverlay(ctx, shown, pathLayers(state, paths), pxPerMeter);
}

async function render(): Promise<void> {
  await refreshData();
  const root = document.getElementById("app");
  if (!root) return;
  root.innerHTML = "";
  const pieces: VNode[] = [searchFormView(state.query, () => void runSearch())];
  if (banner) pieces.push(banner);
  pieces.push(searchResultsView(devices, (b) => void selectBucket(b)));
  if (state.selectedBucket !== null) {
    pieces.push(contactTableView(contacts, state.visible,
      (bucket) => update(toggleVisible(state, bucket))));
  }
  for (const piece of pieces) {
    root.appendChild(mount(piece, document));
  }
  redrawOverlay();
}

window.addEventListener("hashchange", () => {
  state = decodeState(location.hash);
  if (state.query) {
    void api.searchDevices(state.query).then((found) => {
      devices = found;
      void render();
    });
  } else {
    void render();
  }
});

if (state.query) {
  void api.searchDevices(state.query).then((found) => {
    devices = found;
    void render();
  });
} else {
  void render();
}
