import { ContactRow, Device, PathPoint, SiteMapView } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      detail = ((await response.json()) as { error?: string }).error ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  searchDevices(query: string): Promise<Device[]> {
    return getJson(`${this.base}/devices?q=${encodeURIComponent(query)}`);
  }

  contacts(bucket: string, startS?: number, endS?: number): Promise<ContactRow[]> {
    const params = new URLSearchParams();
    if (startS !== undefined) params.set("start", String(startS));
    if (endS !== undefined) params.set("end", String(endS));
    const qs = params.toString();
    return getJson(`${this.base}/devices/${bucket}/contacts${qs ? "?" + qs : ""}`);
  }

  path(bucket: string, site?: string, startNs?: number, endNs?: number): Promise<PathPoint[]> {
    const params = new URLSearchParams();
    if (site !== undefined) params.set("site", site);
    if (startNs !== undefined) params.set("start", String(startNs));
    if (endNs !== undefined) params.set("end", String(endNs));
    const qs = params.toString();
    return getJson(`${this.base}/devices/${bucket}/path${qs ? "?" + qs : ""}`);
  }

  siteMap(siteId: string): Promise<SiteMapView> {
    return getJson(`${this.base}/sites/${siteId}/map`);
  }

  async eraseDevice(bucket: string): Promise<{ bucket_id: string }> {
    const response = await fetch(`${this.base}/devices/${bucket}`, { method: "DELETE" });
    if (!response.ok) throw new ApiError(response.status, "erase failed");
    return (await response.json()) as { bucket_id: string };
  }
}
