"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy/scipy fallback is
picked up transparently when the extension was not built.  ``BACKEND``
records which one is active (it also lands in run manifests).
"""

from . import fallback as _fallback

try:  # pragma: no cover - exercised only when the extension is built
    from . import _core as _compiled

    BACKEND = "compiled"
except ImportError:  # pragma: no cover
    _compiled = None
    BACKEND = "fallback"

_impl = _compiled if _compiled is not None else _fallback


def label_components(mask):
    return _impl.label_components(mask)


def escape_count(member, mask_lo, mask_shape, start, radius2, center, nwalks, seed):
    return _impl.escape_count(
        member, mask_lo, mask_shape, start, radius2, center, nwalks, seed
    )


def backends():
    """All available backends, for cross-checks and benchmarks."""
    out = {"fallback": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
