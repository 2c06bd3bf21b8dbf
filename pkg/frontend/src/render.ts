/** DOM rendering of a page descriptor: the tile mosaic, pan arrows, zoom
 * and size controls, caption, and search box.  Rendering is stateless; all
 * interaction flows through the callbacks given at construction. */

import type { PageDescriptor, PageSize, SearchHit, TileAddress, Wind } from "./api.js";
import { WINDS } from "./api.js";
import type { NavAction } from "./state.js";

export interface RenderCallbacks {
  dispatch(action: NavAction): void;
  submitSearch(query: string): void;
  jumpFamous(label: string): void;
}

const WIND_ARROWS: Record<Wind, string> = {
  n: "▲", ne: "◥", e: "▶", se: "◢",
  s: "▼", sw: "◣", w: "◀", nw: "◤",
};

const SIZES: PageSize[] = ["small", "medium", "large"];

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function addressLabel(a: TileAddress): string {
  return `T=${a.t} S=${a.s} Z=${a.z} X=${a.x} Y=${a.y}`;
}

export class Viewer {
  readonly root: HTMLElement;
  private mosaic: HTMLElement;
  private panBar: Map<Wind, HTMLButtonElement> = new Map();
  private zoomInBtn: HTMLButtonElement;
  private zoomOutBtn: HTMLButtonElement;
  private sizeBtns: Map<PageSize, HTMLButtonElement> = new Map();
  private captionEl: HTMLElement;
  private statusEl: HTMLElement;
  private infoEl: HTMLElement;
  private searchInput: HTMLInputElement;
  private resultsEl: HTMLElement;
  private famousSelect: HTMLSelectElement;

  constructor(container: HTMLElement, private cb: RenderCallbacks) {
    this.root = container;
    container.replaceChildren();

    const top = el("div", "topbar");
    this.searchInput = el("input", "search-input");
    this.searchInput.placeholder = "place name";
    const searchBtn = el("button", "search-btn", "Search");
    searchBtn.addEventListener("click", () =>
      this.cb.submitSearch(this.searchInput.value));
    this.searchInput.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") this.cb.submitSearch(this.searchInput.value);
    });
    this.famousSelect = el("select", "famous-select");
    this.famousSelect.append(el("option", undefined, "famous places"));
    this.famousSelect.addEventListener("change", () => {
      if (this.famousSelect.selectedIndex > 0) {
        this.cb.jumpFamous(this.famousSelect.value);
      }
    });
    for (const size of SIZES) {
      const btn = el("button", "size-btn", size);
      btn.dataset.size = size;
      btn.addEventListener("click", () =>
        this.cb.dispatch({ kind: "setSize", size }));
      this.sizeBtns.set(size, btn);
    }
    top.append(this.searchInput, searchBtn, this.famousSelect,
               ...this.sizeBtns.values());
    this.resultsEl = el("div", "search-results");

    const stage = el("div", "stage");
    this.mosaic = el("div", "mosaic");
    stage.append(this.mosaic);
    for (const wind of WINDS) {
      const btn = el("button", `pan pan-${wind}`, WIND_ARROWS[wind]);
      btn.dataset.wind = wind;
      btn.addEventListener("click", () =>
        this.cb.dispatch({ kind: "pan", wind }));
      this.panBar.set(wind, btn);
      stage.append(btn);
    }

    const side = el("div", "sidebar");
    this.zoomInBtn = el("button", "zoom-in", "Zoom In");
    this.zoomInBtn.addEventListener("click", () =>
      this.cb.dispatch({ kind: "zoomIn" }));
    this.zoomOutBtn = el("button", "zoom-out", "Zoom Out");
    this.zoomOutBtn.addEventListener("click", () =>
      this.cb.dispatch({ kind: "zoomOut" }));
    this.captionEl = el("div", "caption");
    this.infoEl = el("div", "page-info");
    side.append(this.zoomInBtn, this.zoomOutBtn, this.captionEl, this.infoEl);

    this.statusEl = el("div", "status");
    container.append(top, this.resultsEl, stage, side, this.statusEl);
  }

  setFamous(entries: Array<{ label: string }>): void {
    while (this.famousSelect.options.length > 1) this.famousSelect.remove(1);
    for (const entry of entries) {
      const opt = el("option", undefined, entry.label);
      opt.value = entry.label;
      this.famousSelect.append(opt);
    }
  }

  setStatus(message: string): void {
    this.statusEl.textContent = message;
  }

  showSearchResults(hits: SearchHit[]): void {
    this.resultsEl.replaceChildren();
    if (hits.length === 0) {
      this.resultsEl.append(el("div", "no-coverage", "no coverage"));
      return;
    }
    for (const hit of hits) {
      const parts = [hit.place.name, hit.place.state, hit.place.country]
        .filter(Boolean).join(", ");
      const row = el("button", "search-hit",
                     hit.tile ? parts : `${parts} (no imagery)`);
      if (hit.tile) {
        const tile = hit.tile;
        row.addEventListener("click", () => {
          this.resultsEl.replaceChildren();
          this.cb.dispatch({ kind: "jump", address: tile });
        });
      } else {
        row.disabled = true;
      }
      this.resultsEl.append(row);
    }
  }

  clearSearchResults(): void {
    this.resultsEl.replaceChildren();
  }

  renderPage(page: PageDescriptor, tileUrl: (a: TileAddress) => string): void {
    this.mosaic.replaceChildren();
    this.mosaic.style.gridTemplateColumns = `repeat(${page.cols}, 200px)`;
    for (const row of page.grid) {
      for (const cell of row) {
        if (cell.available && cell.address && cell.tile_url) {
          const img = el("img", "cell");
          img.width = 200;
          img.height = 200;
          img.src = tileUrl(cell.address);
          img.dataset.address = addressLabel(cell.address);
          const address = cell.address;
          img.addEventListener("click", () =>
            this.cb.dispatch({ kind: "clickTile", address }));
          this.mosaic.append(img);
        } else {
          const blank = el("div", "cell blank");
          if (cell.address) blank.dataset.address = addressLabel(cell.address);
          this.mosaic.append(blank);
        }
      }
    }
    for (const wind of WINDS) {
      const btn = this.panBar.get(wind)!;
      btn.disabled = !page.pan[wind].available;
    }
    this.zoomInBtn.disabled = !page.zoom_in.address;
    this.zoomOutBtn.disabled = !page.zoom_out.address;
    for (const [size, btn] of this.sizeBtns) {
      btn.classList.toggle("active", size === page.size);
    }
    this.captionEl.textContent = page.caption ?? "";
    const info = [
      addressLabel(page.center),
      `${page.scale_bar_m} m per tile`,
      `source: ${page.source_logo_id}`,
    ];
    if (page.image_date) info.push(`image date: ${page.image_date}`);
    this.infoEl.replaceChildren(...info.map((line) => el("div", "info-line", line)));
    this.setStatus("");
  }
}
