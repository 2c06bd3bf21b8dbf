/** Typed client for the warehouse HTTP API.
 *
 * Address fields follow the server's key names: t = theme, s = scene,
 * z = scale, x, y.
 */

export interface TileAddress {
  t: number;
  s: number;
  z: number;
  x: number;
  y: number;
}

export type PageSize = "small" | "medium" | "large";

export type Wind = "n" | "ne" | "e" | "se" | "s" | "sw" | "w" | "nw";

export const WINDS: Wind[] = ["n", "ne", "e", "se", "s", "sw", "w", "nw"];

export interface PageCell {
  address: TileAddress | null;
  available: boolean;
  tile_url: string | null;
}

export interface PageTarget {
  address: TileAddress | null;
  available: boolean;
}

export interface PageDescriptor {
  center: TileAddress;
  size: PageSize;
  rows: number;
  cols: number;
  grid: PageCell[][];
  pan: Record<Wind, PageTarget>;
  zoom_in: PageTarget;
  zoom_out: PageTarget;
  caption: string | null;
  scale_bar_m: number;
  source_logo_id: string;
  image_date: string | null;
}

export interface SearchHit {
  place: {
    name: string;
    state: string | null;
    country: string;
    lat: number;
    lon: number;
  };
  tile: TileAddress | null;
}

export interface FamousEntry {
  label: string;
  tile: TileAddress | null;
  lat?: number;
  lon?: number;
}

export interface ThemeInfo {
  id: number;
  name: string;
  kind: string;
  pixel_format: string;
  pyramid_levels: number[];
  base_scales: number[];
}

export function sameAddress(a: TileAddress | null, b: TileAddress | null): boolean {
  if (a === null || b === null) return a === b;
  return a.t === b.t && a.s === b.s && a.z === b.z && a.x === b.x && a.y === b.y;
}

export function addressQuery(a: TileAddress): string {
  return `T=${a.t}&S=${a.s}&Z=${a.z}&X=${a.x}&Y=${a.y}`;
}

export class WarehouseApi {
  constructor(private base: string = "") {}

  private async getJson<T>(path: string, signal?: AbortSignal): Promise<T> {
    const resp = await fetch(this.base + path, { signal });
    if (!resp.ok && resp.status !== 404) {
      throw new Error(`${path}: HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  fetchPage(center: TileAddress, size: PageSize, signal?: AbortSignal): Promise<PageDescriptor> {
    return this.getJson(`/page?${addressQuery(center)}&size=${size}`, signal);
  }

  async search(place: string): Promise<SearchHit[]> {
    const out = await this.getJson<{ results: SearchHit[] }>(
      `/search?place=${encodeURIComponent(place)}`);
    return out.results;
  }

  async lookupLatLon(lat: number, lon: number): Promise<TileAddress | null> {
    const out = await this.getJson<{ tile: TileAddress | null }>(
      `/latlon?lat=${lat}&lon=${lon}`);
    return out.tile ?? null;
  }

  async famous(): Promise<FamousEntry[]> {
    const out = await this.getJson<{ famous: FamousEntry[] }>("/famous");
    return out.famous;
  }

  async themes(): Promise<ThemeInfo[]> {
    const out = await this.getJson<{ themes: ThemeInfo[] }>("/themes");
    return out.themes;
  }

  tileUrl(a: TileAddress): string {
    return `${this.base}/tile?${addressQuery(a)}`;
  }

  coverageUrl(theme: number | "all", ppd: number): string {
    return `${this.base}/coverage?theme=${theme}&ppd=${ppd}`;
  }
}
