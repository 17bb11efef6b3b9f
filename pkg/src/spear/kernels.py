"""Backend selection for the numeric hot loops.

The compiled extension is used when it was built; otherwise (or when the
environment variable ``SPEAR_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the pure-Python fallback is loaded. Both expose the same functions.
"""
import importlib
import os

__all__ = ["BACKEND", "betainc", "pooled_t", "levene_w", "split_t_stats",
           "split_levene_stats", "sq_distances", "load_backend"]


def load_backend(name=None):
    """Return the kernel module for ``name`` ("cython" or "python"; None = best available)."""
    if name == "python":
        return importlib.import_module("spear._pykernels")
    if name == "cython":
        return importlib.import_module("spear._ckernels")
    if name is not None:
        raise ValueError(f"unknown kernel backend {name!r}")
    if os.environ.get("SPEAR_PURE_PYTHON", "0") not in ("", "0"):
        return load_backend("python")
    try:
        return load_backend("cython")
    except ImportError:
        return load_backend("python")


_impl = load_backend()
BACKEND = "cython" if _impl.__name__.endswith("_ckernels") else "python"

betainc = _impl.betainc
pooled_t = _impl.pooled_t
levene_w = _impl.levene_w
split_t_stats = _impl.split_t_stats
split_levene_stats = _impl.split_levene_stats
sq_distances = _impl.sq_distances
