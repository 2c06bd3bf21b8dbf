"""Built-in theme registry.

Three stock themes mirror the common ingest families:

* ``aerial``  - projected 1 m grayscale orthophotos, pyramid 1 m .. 64 m.
* ``topo``    - projected scanned map sheets with a fixed 13-color palette.
  Sources arrive at 2.5 m / 10 m / 25 m and are cut into base levels at
  2 m / 16 m / 64 m respectively; the remaining levels are derived.
* ``strip``   - raw (unrectified) satellite strips, resampled to 1 m.

Tests and embedders may register additional themes.
"""

from __future__ import annotations

from .grid import Theme

# White first so palette index 0 is the no-data sentinel, then the classic
# map-sheet inks.
TOPO_PALETTE = (
    (255, 255, 255),  # white / no data
    (0, 0, 0),        # black line work
    (0, 151, 164),    # lake blue
    (203, 0, 23),     # red road fill
    (131, 66, 37),    # contour brown
    (201, 234, 157),  # woodland green
    (137, 51, 128),   # revision purple
    (255, 230, 160),  # urban tint
    (167, 226, 226),  # light blue
    (255, 160, 122),  # secondary road
    (118, 118, 118),  # gray line work
    (240, 240, 200),  # clearing tint
    (30, 80, 150),    # deep water
)

AERIAL = Theme(
    id=1,
    name="aerial",
    kind="projected",
    pixel_format="gray8",
    pyramid_levels=(10, 11, 12, 13, 14, 15, 16),
)

TOPO = Theme(
    id=2,
    name="topo",
    kind="projected",
    pixel_format="indexed8",
    pyramid_levels=(11, 12, 13, 14, 15, 16, 17),
    base_scales=(11, 14, 16),
    source_bindings=((2.5, 11), (10.0, 14), (25.0, 16)),
    palette=TOPO_PALETTE,
)

STRIP = Theme(
    id=3,
    name="strip",
    kind="raw",
    pixel_format="gray8",
    pyramid_levels=(10, 11, 12, 13, 14, 15, 16),
)

_REGISTRY: dict[int, Theme] = {t.id: t for t in (AERIAL, TOPO, STRIP)}


def register(theme: Theme, replace: bool = False) -> Theme:
    if theme.id in _REGISTRY and not replace:
        raise ValueError(f"theme id {theme.id} already registered")
    _REGISTRY[theme.id] = theme
    return theme


def get(theme_id: int) -> Theme:
    try:
        return _REGISTRY[theme_id]
    except KeyError:
        raise KeyError(f"unregistered theme id {theme_id}") from None


def by_name(name: str) -> Theme:
    for theme in _REGISTRY.values():
        if theme.name == name:
            return theme
    raise KeyError(f"unregistered theme name {name!r}")


def all_themes() -> list[Theme]:
    return sorted(_REGISTRY.values(), key=lambda t: t.id)
