"""Kernel backend selection.

The compiled extension is used when importable; set ``EJECTSHAP_PURE=1``
to force the pure-Python fallback. :func:`use_backend` switches at runtime
(benchmarks and backend-equivalence tests rely on it).
"""

from __future__ import annotations

import importlib
import os
import weakref

import numpy as np

from . import _pykernels

_compiled = None
if not os.environ.get("EJECTSHAP_PURE"):
    try:
        _compiled = importlib.import_module("ejectshap._kernels")
    except ImportError:  # extension not built
        _compiled = None

_active = _compiled or _pykernels

# per-tree list views for the Python backend; numpy scalar indexing is slow
_list_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def compiled_available() -> bool:
    return _compiled is not None


def backend() -> str:
    return _active.BACKEND


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def use_backend(name: str) -> None:
    global _active
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    elif name == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")


class backend_context:
    """``with backend_context("python"): ...`` temporarily switches backend."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        self.prev = backend()
        use_backend(self.name)
        return self

    def __exit__(self, *exc):
        use_backend(self.prev)


def _tree_args(tree, with_cover=False):
    if _active is _pykernels:
        cached = _list_cache.get(tree)
        if cached is None:
            cached = (
                tree.left.tolist(), tree.right.tolist(), tree.features.tolist(),
                tree.thresholds.tolist(), tree.values.tolist(), tree.cover.tolist(),
            )
            _list_cache[tree] = cached
        return cached if with_cover else cached[:5]
    args = (tree.left, tree.right, tree.features, tree.thresholds, tree.values)
    return args + (tree.cover,) if with_cover else args


def _vec(x):
    if _active is _pykernels:
        return x.tolist() if isinstance(x, np.ndarray) else list(x)
    return np.ascontiguousarray(x, dtype=np.float64)


def _finish(out, buf):
    if _active is _pykernels:
        for i, v in enumerate(buf):
            out[i] = v


def game_shapley(u, k, weights):
    return _active.game_shapley(list(u) if _active is _pykernels else u, k, weights)


def predict_tree(tree, x) -> float:
    return _active.predict_tree(*_tree_args(tree), _vec(x))


def eject_tree(tree, x, weights, out: np.ndarray):
    buf = out.tolist() if _active is _pykernels else out
    res = _active.eject_tree(*_tree_args(tree), _vec(x), weights, buf)
    _finish(out, buf)
    return res


def treeshap_tree(tree, x, weights, out: np.ndarray):
    buf = out.tolist() if _active is _pykernels else out
    res = _active.treeshap_tree(*_tree_args(tree, with_cover=True), _vec(x), weights, buf)
    _finish(out, buf)
    return res


def interventional_tree(tree, x, ref, weights, out: np.ndarray):
    if _active is _pykernels:
        ref_arg = [list(map(float, y)) for y in ref]
    else:
        ref_arg = np.ascontiguousarray(ref, dtype=np.float64)
        if ref_arg.ndim != 2:
            raise ValueError("reference set must be a 2-d array")
    buf = out.tolist() if _active is _pykernels else out
    res = _active.interventional_tree(*_tree_args(tree), _vec(x), ref_arg, weights, buf)
    _finish(out, buf)
    return res
