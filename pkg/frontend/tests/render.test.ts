import { beforeEach, describe, expect, it, vi } from "vitest";

import { WINDS, type PageDescriptor, type TileAddress } from "../src/api.js";
import { Viewer } from "../src/render.js";
import type { NavAction } from "../src/state.js";

function addr(x: number, y: number, z = 10): TileAddress {
  return { t: 1, s: 10, z, x, y };
}

function makePage(): PageDescriptor {
  const cells = (row: number) => [0, 1, 2].map((col) => {
    const a = addr(4 + col, 6 - row);
    const available = col !== 2;  // right column unavailable
    return {
      address: a,
      available,
      tile_url: available ? `/tile?T=1&S=10&Z=10&X=${a.x}&Y=${a.y}` : null,
    };
  });
  const pan = {} as PageDescriptor["pan"];
  for (const wind of WINDS) {
    pan[wind] = {
      address: addr(5, 5),
      available: !wind.includes("e"),  // east side has no coverage
    };
  }
  return {
    center: addr(5, 5),
    size: "small",
    rows: 2,
    cols: 3,
    grid: [cells(0), cells(1)],
    pan,
    zoom_in: { address: null, available: false },
    zoom_out: { address: addr(2, 3, 11), available: true },
    caption: "3 Km NE of Bayview, Westmark, Examplia",
    scale_bar_m: 200,
    source_logo_id: "aerial",
    image_date: "1998-06-24",
  };
}

describe("Viewer.renderPage", () => {
  let container: HTMLElement;
  let actions: NavAction[];
  let viewer: Viewer;

  beforeEach(() => {
    document.body.innerHTML = "";
    container = document.createElement("div");
    document.body.append(container);
    actions = [];
    viewer = new Viewer(container, {
      dispatch: (a) => actions.push(a),
      submitSearch: vi.fn(),
      jumpFamous: vi.fn(),
    });
    viewer.renderPage(makePage(), (a) => `/tile?X=${a.x}&Y=${a.y}`);
  });

  it("renders available cells as images and the rest as placeholders", () => {
    const imgs = container.querySelectorAll(".mosaic img");
    const blanks = container.querySelectorAll(".mosaic .blank");
    expect(imgs.length).toBe(4);
    expect(blanks.length).toBe(2);
  });

  it("disables pan arrows exactly where the page says unavailable", () => {
    for (const wind of WINDS) {
      const btn = container.querySelector<HTMLButtonElement>(`.pan-${wind}`)!;
      expect(btn.disabled).toBe(wind.includes("e"));
    }
  });

  it("disables zoom-in at base scale but not zoom-out", () => {
    expect(container.querySelector<HTMLButtonElement>(".zoom-in")!.disabled).toBe(true);
    expect(container.querySelector<HTMLButtonElement>(".zoom-out")!.disabled).toBe(false);
  });

  it("clicking a tile dispatches its address", () => {
    const img = container.querySelector<HTMLImageElement>(".mosaic img")!;
    img.click();
    expect(actions).toEqual([
      { kind: "clickTile", address: addr(4, 6) },
    ]);
  });

  it("shows caption and page info", () => {
    expect(container.querySelector(".caption")!.textContent).toContain("Bayview");
    const info = container.querySelector(".page-info")!.textContent!;
    expect(info).toContain("200 m per tile");
    expect(info).toContain("1998-06-24");
  });

  it("disabled pan buttons do not dispatch", () => {
    const east = container.querySelector<HTMLButtonElement>(".pan-e")!;
    east.click();
    expect(actions).toEqual([]);
  });
});
