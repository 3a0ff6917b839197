// Console views: search results, the contact-history table, banners.
// Every number shown comes verbatim from an API response; the console never
// recomputes contact statistics.

import { h, Handler, VNode } from "./render.js";
import { ContactRow, Device } from "./types.js";

export function searchFormView(query: string, onSubmit: Handler): VNode {
  // The submit handler reads the live input value; the view only declares
  // the structure.
  return h("div", { class: "search-form" }, [
    h("input", {
      class: "search-input", id: "search-input", type: "text", value: query,
      placeholder: "MAC address or model fingerprint fragment",
    }),
    h("button", { class: "search-button", id: "search-button", type: "button" },
      ["Search"], { click: onSubmit }),
  ]);
}

export function validationView(message: string): VNode {
  return h("p", { class: "validation-message" }, [message]);
}

export function errorBannerView(message: string, onRetry: Handler): VNode {
  return h("div", { class: "error-banner" }, [
    h("span", {}, [message]),
    h("button", { class: "retry-button" }, ["Retry"], { click: onRetry }),
  ]);
}

export function deviceCardView(device: Device, onSelect: Handler): VNode {
  return h("div", { class: "device-card", "data-bucket": device.bucket_id }, [
    h("h3", {}, [`Device bucket ${device.bucket_id}`]),
    h("p", { class: "device-model" },
      [device.model_label ?? "unknown model"]),
    h("p", { class: "device-macs" },
      [`${device.mac_count} MAC address${device.mac_count === 1 ? "" : "es"}`]),
    h("p", { class: "device-fingerprint" },
      [device.fingerprint ? `fingerprint ${device.fingerprint.slice(0, 16)}…` : "no fingerprint"]),
    h("button", { class: "select-device" }, ["Show contact history"],
      { click: onSelect }),
  ]);
}

export function searchResultsView(devices: Device[],
                                  onSelect: (bucket: string) => void): VNode {
  if (!devices.length) {
    return h("div", { class: "search-results empty-state" },
      [h("p", {}, ["No devices match the query."])]);
  }
  return h("div", { class: "search-results" },
    devices.map((d) => deviceCardView(d, () => onSelect(d.bucket_id))));
}

const TABLE_HEADERS = ["Suspected case", "Site", "Duration (samples)",
  "Last contact", "Avg distance (cells)", "Min distance (cells)",
  "0–5", "5–10", "10–15", "Path"];

export function contactRowView(row: ContactRow, shown: boolean,
                               onToggle: Handler): VNode {
  return h("tr", { class: "contact-row", "data-bucket": row.second_key }, [
    h("td", {}, [row.second_key]),
    h("td", {}, [row.site_id]),
    h("td", {}, [String(row.contact_duration)]),
    h("td", {}, [String(row.last_contact_time)]),
    h("td", {}, [String(row.avg_distance)]),
    h("td", {}, [String(row.min_distance)]),
    h("td", {}, [String(row.band_0_5)]),
    h("td", {}, [String(row.band_5_10)]),
    h("td", {}, [String(row.band_10_15)]),
    h("td", {}, [
      h("button", { class: shown ? "toggle-path shown" : "toggle-path" },
        [shown ? "Hide path" : "Show path"], { click: onToggle }),
    ]),
  ]);
}

export function contactTableView(rows: ContactRow[], visible: string[],
                                 onToggle: (bucket: string) => void): VNode {
  if (!rows.length) {
    return h("div", { class: "contact-table empty-state" },
      [h("p", {}, ["No contacts in the selected window."])]);
  }
  return h("table", { class: "contact-table" }, [
    h("thead", {}, [h("tr", {}, TABLE_HEADERS.map((t) => h("th", {}, [t])))]),
    h("tbody", {}, rows.map((row) =>
      contactRowView(row, visible.includes(row.second_key),
        () => onToggle(row.second_key)))),
  ]);
}
