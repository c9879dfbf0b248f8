"""Inner loops of truncated Taylor-series arithmetic.

The product of two batches of truncated multivariate series is the only
kernel whose cost grows with the number of monomials squared.  It is compiled
with numba when available; setting ``TANGENT_FORGE_DISABLE_NUMBA=1`` selects
the pure-numpy path (same results to rounding).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("TANGENT_FORGE_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _series_product_numpy(a, b, left, right, starts, nout):
    prod = a[:, left] * b[:, right]
    return np.add.reduceat(prod, starts, axis=1)


if HAVE_NUMBA:

    @njit(nogil=True)
    def _series_product_numba(a, b, left, right, starts, nout):
        nb = a.shape[0]
        npair = left.shape[0]
        out = np.zeros((nb, nout))
        for k in range(nb):
            col = 0
            nxt = starts[1] if nout > 1 else npair
            acc = 0.0
            for p in range(npair):
                if p == nxt:
                    out[k, col] = acc
                    acc = 0.0
                    col += 1
                    nxt = starts[col + 1] if col + 1 < nout else npair
                acc += a[k, left[p]] * b[k, right[p]]
            out[k, col] = acc
        return out

else:  # pragma: no cover
    _series_product_numba = None


BACKEND = "numba" if (HAVE_NUMBA and not _DISABLED) else "numpy"


def set_backend(name: str) -> None:
    """Switch the product kernel (``"numba"`` or ``"numpy"``) at runtime."""
    global BACKEND
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def series_product(a: np.ndarray, b: np.ndarray, table) -> np.ndarray:
    """Batched truncated product.

    ``a`` and ``b`` have shape ``(batch, ncoef)``; ``table`` is the
    ``(left, right, starts)`` triple of a ``ProductTable`` with pairs sorted by
    target monomial.
    """
    left, right, starts = table
    nout = starts.shape[0]
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if BACKEND == "numba":
        return _series_product_numba(a, b, left, right, starts, nout)
    return _series_product_numpy(a, b, left, right, starts, nout)
