/** Pure navigation logic.
 *
 * Every view change is a reduction of (state, action, last server page) to
 * a new state, with no hidden inputs: replaying a recorded action log
 * against recorded page descriptors reproduces the same final center.
 */

import type { PageDescriptor, PageSize, TileAddress, Wind } from "./api.js";

export interface ViewState {
  center: TileAddress;
  size: PageSize;
  lastSearch: string;
}

export interface ScaleBounds {
  minScale: number;
  maxScale: number;
}

export type NavAction =
  | { kind: "pan"; wind: Wind }
  | { kind: "zoomIn" }
  | { kind: "zoomOut" }
  | { kind: "clickTile"; address: TileAddress }
  | { kind: "setSize"; size: PageSize }
  | { kind: "jump"; address: TileAddress }
  | { kind: "search"; query: string; hit: TileAddress | null };

const WIND_STEPS: Record<Wind, [number, number]> = {
  n: [0, 1], ne: [1, 1], e: [1, 0], se: [1, -1],
  s: [0, -1], sw: [-1, -1], w: [-1, 0], nw: [-1, 1],
};

/** One-tile pan; null when the step would leave the grid. */
export function panStep(a: TileAddress, wind: Wind): TileAddress | null {
  const [dx, dy] = WIND_STEPS[wind];
  const x = a.x + dx;
  const y = a.y + dy;
  if (x < 0 || y < 0) return null;
  return { ...a, x, y };
}

/** One level coarser; the parent's footprint contains this tile. */
export function parentOf(a: TileAddress, bounds: ScaleBounds): TileAddress | null {
  if (a.z + 1 > bounds.maxScale) return null;
  return { ...a, z: a.z + 1, x: Math.floor(a.x / 2), y: Math.ceil(a.y / 2) };
}

/** The finer tile at this tile's midpoint (bottom-right child under
 * top-left anchoring); matches the server's zoom_in target. */
export function childUnder(a: TileAddress, bounds: ScaleBounds): TileAddress | null {
  if (a.z - 1 < bounds.minScale) return null;
  if (a.y >= 1) return { ...a, z: a.z - 1, x: 2 * a.x + 1, y: 2 * a.y - 1 };
  return { ...a, z: a.z - 1, x: 2 * a.x, y: 0 };
}

export function reduce(state: ViewState, action: NavAction,
                       page: PageDescriptor | null,
                       bounds: ScaleBounds): ViewState {
  switch (action.kind) {
    case "pan": {
      if (page && !page.pan[action.wind].available) return state;
      const target = panStep(state.center, action.wind);
      return target ? { ...state, center: target } : state;
    }
    case "zoomIn": {
      const target = childUnder(state.center, bounds);
      return target ? { ...state, center: target } : state;
    }
    case "zoomOut": {
      const target = parentOf(state.center, bounds);
      return target ? { ...state, center: target } : state;
    }
    case "clickTile": {
      const target = childUnder(action.address, bounds);
      return target ? { ...state, center: target } : state;
    }
    case "setSize":
      return { ...state, size: action.size };
    case "jump":
      return { ...state, center: action.address };
    case "search":
      return action.hit
        ? { ...state, center: action.hit, lastSearch: action.query }
        : { ...state, lastSearch: action.query };
  }
}

/** Replay a recorded log of (action, page-at-that-moment) pairs. */
export function replay(initial: ViewState,
                       log: Array<[NavAction, PageDescriptor | null]>,
                       bounds: ScaleBounds): ViewState {
  let state = initial;
  for (const [action, page] of log) {
    state = reduce(state, action, page, bounds);
  }
  return state;
}
