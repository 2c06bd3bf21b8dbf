/** Application shell: owns the view state, keeps exactly one /page request
 * in flight (newer navigation aborts an older fetch), and syncs the center
 * address into browser history. */

import { WarehouseApi, sameAddress } from "./api.js";
import type { FamousEntry, PageDescriptor, PageSize, TileAddress } from "./api.js";
import { reduce } from "./state.js";
import type { NavAction, ScaleBounds, ViewState } from "./state.js";
import { Viewer } from "./render.js";

export class App {
  state: ViewState;
  page: PageDescriptor | null = null;
  bounds: ScaleBounds = { minScale: 0, maxScale: 22 };
  private viewer: Viewer;
  private inflight: AbortController | null = null;
  private famousEntries: FamousEntry[] = [];

  constructor(private api: WarehouseApi, container: HTMLElement,
              initial: ViewState, private pushHistory = false) {
    this.state = initial;
    this.viewer = new Viewer(container, {
      dispatch: (action) => void this.dispatch(action),
      submitSearch: (query) => void this.search(query),
      jumpFamous: (label) => void this.jumpFamous(label),
    });
  }

  async start(): Promise<void> {
    try {
      const themes = await this.api.themes();
      const theme = themes.find((t) => t.id === this.state.center.t);
      if (theme) {
        this.bounds = {
          minScale: Math.min(...theme.pyramid_levels),
          maxScale: Math.max(...theme.pyramid_levels),
        };
      }
      this.famousEntries = await this.api.famous();
      this.viewer.setFamous(this.famousEntries);
    } catch {
      // metadata is a convenience; the page fetch reports real failures
    }
    await this.refresh();
  }

  async dispatch(action: NavAction): Promise<void> {
    const next = reduce(this.state, action, this.page, this.bounds);
    const moved = !sameAddress(next.center, this.state.center);
    const resized = next.size !== this.state.size;
    this.state = next;
    if (moved || resized) {
      if (moved && this.pushHistory && typeof history !== "undefined") {
        const c = next.center;
        const url = `?T=${c.t}&S=${c.s}&Z=${c.z}&X=${c.x}&Y=${c.y}&size=${next.size}`;
        history.pushState({ center: c, size: next.size }, "", url);
      }
      await this.refresh();
    }
  }

  async refresh(): Promise<void> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.viewer.setStatus("loading…");
    try {
      const page = await this.api.fetchPage(
        this.state.center, this.state.size, controller.signal);
      if (controller !== this.inflight) return;  // superseded
      this.page = page;
      this.viewer.renderPage(page, (a) => this.api.tileUrl(a));
    } catch (err) {
      if ((err as Error).name === "AbortError") return;
      this.viewer.setStatus(`failed to load page: ${(err as Error).message}`);
    }
  }

  async search(query: string): Promise<void> {
    query = query.trim();
    if (!query) return;
    let hits;
    try {
      hits = await this.api.search(query);
    } catch (err) {
      this.viewer.setStatus(`search failed: ${(err as Error).message}`);
      return;
    }
    const covered = hits.filter((h) => h.tile !== null);
    if (covered.length === 1) {
      this.viewer.clearSearchResults();
      await this.dispatch({ kind: "search", query, hit: covered[0].tile });
    } else if (hits.length === 0) {
      this.viewer.showSearchResults([]);
      await this.dispatch({ kind: "search", query, hit: null });
    } else {
      this.viewer.showSearchResults(hits);
      await this.dispatch({ kind: "search", query, hit: null });
    }
  }

  async jumpFamous(label: string): Promise<void> {
    const entry = this.famousEntries.find((f) => f.label === label);
    if (!entry) return;
    let tile = entry.tile;
    if (!tile && entry.lat !== undefined && entry.lon !== undefined) {
      tile = await this.api.lookupLatLon(entry.lat, entry.lon);
    }
    if (tile) {
      await this.dispatch({ kind: "jump", address: tile });
    } else {
      this.viewer.setStatus(`no imagery for ${label}`);
    }
  }
}

function parseInitial(search: string): ViewState | null {
  const params = new URLSearchParams(search);
  const keys = ["T", "S", "Z", "X", "Y"];
  if (!keys.every((k) => params.has(k))) return null;
  const [t, s, z, x, y] = keys.map((k) => Number(params.get(k)));
  if ([t, s, z, x, y].some((v) => !Number.isInteger(v) || v < 0)) return null;
  const size = (params.get("size") ?? "small") as PageSize;
  return {
    center: { t, s, z, x, y },
    size: ["small", "medium", "large"].includes(size) ? size : "small",
    lastSearch: "",
  };
}

async function boot(): Promise<void> {
  const container = document.getElementById("viewer");
  if (!container) return;
  const api = new WarehouseApi("");
  let initial = parseInitial(location.search);
  if (!initial) {
    // land on the first famous place with imagery
    try {
      const famous = await api.famous();
      const entry = famous.find((f) => f.tile !== null);
      if (entry && entry.tile) {
        initial = { center: entry.tile, size: "small", lastSearch: "" };
      }
    } catch {
      // fall through to the empty-warehouse message
    }
  }
  if (!initial) {
    container.textContent =
      "warehouse has no published imagery yet; load a scene and run the scaler";
    return;
  }
  const app = new App(api, container, initial, true);
  window.addEventListener("popstate", (ev) => {
    const st = ev.state as { center: TileAddress; size: PageSize } | null;
    if (st && st.center) {
      app.state = { ...app.state, center: st.center, size: st.size };
      void app.refresh();
    }
  });
  await app.start();
}

if (typeof window !== "undefined" && typeof document !== "undefined"
    && document.getElementById("viewer")) {
  void boot();
}
