// Shapes coming back from the tracewave service API.

export interface Device {
  bucket_id: string;
  fingerprint: string;
  macs: string[];
  mac_count: number;
  model_label: string | null;
  created_at: number | null;
}

export interface ContactRow {
  first_key: string;
  second_key: string;
  site_id: string;
  contact_duration: number;
  last_contact_time: number;
  avg_distance: number;
  min_distance: number;
  band_0_5: number;
  band_5_10: number;
  band_10_15: number;
}

export interface PathPoint {
  bucket_id: string;
  site_id: string;
  t_ns: number;
  x_m: number;
  y_m: number;
  source: string;
}

export interface SiteMapView {
  site_id: string;
  width: number;
  height: number;
  resolution_m: number;
  rows: string[];
}
