"""Pixel-kernel backend selection.

The hot per-pixel loops (merge, 2x2 aggregation, resampling, blank counts)
exist twice: a compiled Cython extension (``_native``) and a pure-Python
reference (``_pure``).  The compiled backend is picked at import time when
present; set ``TILEWAREHOUSE_KERNELS=pure`` (or ``native``) to force one.

``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

_forced = os.environ.get("TILEWAREHOUSE_KERNELS", "").strip().lower()

if _forced == "pure":
    from . import _pure as _impl

    BACKEND = "pure"
elif _forced == "native":
    from . import _native as _impl  # type: ignore[no-redef]

    BACKEND = "native"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        from . import _pure as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

count_value = _impl.count_value
merge_prefer_nonblank = _impl.merge_prefer_nonblank
downsample_mean = _impl.downsample_mean
downsample_nearest = _impl.downsample_nearest
resample_bilinear = _impl.resample_bilinear
resample_nearest = _impl.resample_nearest


def available_backends() -> list[str]:
    names = ["pure"]
    try:
        from . import _native  # noqa: F401

        names.insert(0, "native")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the backend module by name (for tests and benchmarks)."""
    if name == "pure":
        from . import _pure

        return _pure
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
