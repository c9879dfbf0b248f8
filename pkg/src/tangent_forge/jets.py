"""Truncated multivariate Taylor series ("jets") and tensor arithmetic on them.

A :class:`Jet` stores, for every tensor component, the Taylor coefficients
``c_a = (d^a f)(p) / a!`` of all monomials of total degree <= ``order`` in the
``nvars`` chart coordinates, centred at a point ``p``.  Monomials are sorted by
degree, so a jet of order ``r`` is a prefix of any higher-order jet of the same
field; truncation is slicing.

Products truncate to the smaller order, a partial derivative lowers the order
by one.  Geometric objects built from jets therefore carry exactly the number
of derivatives that is still exact at the centre point.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement
from numbers import Real

import numpy as np

from . import _kernels
from .expr import (
    Add,
    Const,
    DomainError,
    Div,
    Func,
    Mul,
    Neg,
    Pow,
    ScalarExpr,
    Sub,
    Var,
)

MAX_ORDER = 4


class JetOrderError(ValueError):
    """A derivative was requested beyond the order carried by a jet."""


# --------------------------------------------------------------------------
# monomial bookkeeping


@lru_cache(maxsize=None)
def _degree_block(n: int, d: int) -> np.ndarray:
    rows = []
    for combo in combinations_with_replacement(range(n), d):
        e = [0] * n
        for k in combo:
            e[k] += 1
        rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, n)


@lru_cache(maxsize=None)
def monomials(n: int, r: int) -> np.ndarray:
    """Exponent table of shape ``(ncoef, n)``, graded by degree."""
    return np.concatenate([_degree_block(n, d) for d in range(r + 1)], axis=0)


@lru_cache(maxsize=None)
def ncoef(n: int, r: int) -> int:
    return math.comb(n + r, r)


@lru_cache(maxsize=None)
def _index(n: int, r: int) -> dict:
    return {tuple(e): k for k, e in enumerate(monomials(n, r))}


@lru_cache(maxsize=None)
def _product_table(n: int, r: int):
    mon = monomials(n, r)
    deg = mon.sum(axis=1)
    index = _index(n, r)
    left, right, target = [], [], []
    for i in range(len(mon)):
        for j in range(ncoef(n, r - deg[i])):
            left.append(i)
            right.append(j)
            target.append(index[tuple(mon[i] + mon[j])])
    left = np.array(left, dtype=np.int64)
    right = np.array(right, dtype=np.int64)
    target = np.array(target, dtype=np.int64)
    order = np.argsort(target, kind="stable")
    left, right, target = left[order], right[order], target[order]
    starts = np.searchsorted(target, np.arange(len(mon)))
    return left, right, starts.astype(np.int64)


@lru_cache(maxsize=None)
def _partial_table(n: int, r: int, k: int):
    """Source indices and factors for d/dz_k of an order-r jet."""
    low = monomials(n, r - 1)
    index = _index(n, r)
    src = np.empty(len(low), dtype=np.int64)
    fac = np.empty(len(low))
    for q, e in enumerate(low):
        up = e.copy()
        up[k] += 1
        src[q] = index[tuple(up)]
        fac[q] = up[k]
    return src, fac


@lru_cache(maxsize=None)
def _factorials(n: int, r: int) -> np.ndarray:
    mon = monomials(n, r)
    return np.array([np.prod([math.factorial(int(v)) for v in e]) for e in mon], dtype=float)


# --------------------------------------------------------------------------


class Jet:
    """Tensor-valued truncated Taylor series centred at one point."""

    __slots__ = ("coeffs", "nvars", "order")
    __array_priority__ = 100

    def __init__(self, coeffs: np.ndarray, nvars: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0:
            raise JetOrderError("jet order dropped below zero (not enough derivatives)")
        if coeffs.shape[-1] != ncoef(nvars, order):
            raise ValueError("coefficient axis does not match (nvars, order)")
        self.coeffs = coeffs
        self.nvars = nvars
        self.order = order

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (ncoef(nvars, order),))
        c[..., 0] = value
        return cls(c, nvars, order)

    @classmethod
    def zeros(cls, shape, nvars: int, order: int) -> "Jet":
        return cls(np.zeros(tuple(shape) + (ncoef(nvars, order),)), nvars, order)

    @classmethod
    def variable(cls, k: int, point, order: int) -> "Jet":
        n = len(point)
        c = np.zeros(ncoef(n, order))
        c[0] = point[k]
        if order >= 1:
            c[1 + k] = 1.0
        return cls(c, n, order)

    @classmethod
    def stack(cls, jets, axis: int = 0) -> "Jet":
        jets = list(jets)
        r = min(j.order for j in jets)
        n = jets[0].nvars
        N = ncoef(n, r)
        ax = axis if axis >= 0 else axis - 1
        return cls(np.stack([j.coeffs[..., :N] for j in jets], axis=ax), n, r)

    # basic properties ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[..., : ncoef(self.nvars, order)], self.nvars, order)

    def derivative(self, multi_index) -> np.ndarray:
        """Partial derivative ``d^a f(p)`` for a multi-index ``a``."""
        a = tuple(int(v) for v in multi_index)
        d = sum(a)
        if d > self.order:
            raise JetOrderError(f"derivative of order {d} from a jet of order {self.order}")
        k = _index(self.nvars, self.order)[a]
        return self.coeffs[..., k] * _factorials(self.nvars, self.order)[k]

    def partial(self, k: int) -> "Jet":
        """The jet of ``df/dz_k`` (one order lower)."""
        if self.order < 1:
            raise JetOrderError("partial derivative of an order-0 jet")
        src, fac = _partial_table(self.nvars, self.order, k)
        return Jet(self.coeffs[..., src] * fac, self.nvars, self.order - 1)

    def gradient(self) -> "Jet":
        """Coordinate gradient with the derivative index as the last tensor axis."""
        parts = [self.partial(k) for k in range(self.nvars)]
        return Jet(np.stack([p.coeffs for p in parts], axis=-2), self.nvars, self.order - 1)

    # tensor-axis manipulation --------------------------------------------

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            return Jet(self.coeffs[idx + (slice(None),)], self.nvars, self.order)
        return Jet(self.coeffs[idx + (Ellipsis, slice(None))], self.nvars, self.order)

    def transpose(self, *axes) -> "Jet":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(np.transpose(self.coeffs, tuple(axes) + (self.ndim,)), self.nvars, self.order)

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.nvars, self.order)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        axis = tuple(a % self.ndim for a in np.atleast_1d(axis))
        return Jet(self.coeffs.sum(axis=axis), self.nvars, self.order)

    def copy(self) -> "Jet":
        return Jet(self.coeffs.copy(), self.nvars, self.order)

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different numbers of variables")
            return other
        return Jet.constant(np.asarray(other, dtype=float), self.nvars, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        r = min(self.order, other.order)
        N = ncoef(self.nvars, r)
        return Jet(self.coeffs[..., :N] + other.coeffs[..., :N], self.nvars, r)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        r = min(self.order, other.order)
        N = ncoef(self.nvars, r)
        return Jet(self.coeffs[..., :N] - other.coeffs[..., :N], self.nvars, r)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return Jet(-self.coeffs, self.nvars, self.order)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return _series_mul(self, other)
        arr = np.asarray(other, dtype=float)
        return Jet(self.coeffs * arr[..., None], self.nvars, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return _series_mul(self, reciprocal(other))
        arr = np.asarray(other, dtype=float)
        return Jet(self.coeffs / arr[..., None], self.nvars, self.order)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Real) and float(p).is_integer():
            return integer_power(self, int(p))
        return real_power(self, float(p))


def _series_mul(a: Jet, b: Jet) -> Jet:
    if a.nvars != b.nvars:
        raise ValueError("jets over different numbers of variables")
    n = a.nvars
    r = min(a.order, b.order)
    N = ncoef(n, r)
    ac = a.coeffs[..., :N]
    bc = b.coeffs[..., :N]
    shape = np.broadcast_shapes(ac.shape[:-1], bc.shape[:-1])
    A = np.broadcast_to(ac, shape + (N,)).reshape(-1, N)
    B = np.broadcast_to(bc, shape + (N,)).reshape(-1, N)
    if r == 0:
        out = A * B
    else:
        out = _kernels.series_product(A, B, _product_table(n, r))
    return Jet(out.reshape(shape + (N,)), n, r)


def _nilpotent(a: Jet) -> Jet:
    h = a.coeffs.copy()
    h[..., 0] = 0.0
    return Jet(h, a.nvars, a.order)


def compose(a: Jet, taylor: np.ndarray) -> Jet:
    """``f(a)`` from the univariate Taylor coefficients ``taylor[k] = f^(k)(a0)/k!``.

    ``taylor`` has shape ``(order+1,) + a.shape``.
    """
    h = _nilpotent(a)
    out = Jet.constant(taylor[0], a.nvars, a.order)
    power = None
    for k in range(1, a.order + 1):
        power = h if power is None else _series_mul(power, h)
        out = out + power * taylor[k]
    return out


def reciprocal(a: Jet) -> Jet:
    a0 = a.value
    if np.any(a0 == 0.0):
        raise ZeroDivisionError("reciprocal of a jet with zero value")
    k = np.arange(a.order + 1).reshape((-1,) + (1,) * a.ndim)
    return compose(a, (-1.0) ** k / a0 ** (k + 1))


def integer_power(a: Jet, p: int) -> Jet:
    if p < 0:
        return reciprocal(integer_power(a, -p))
    result = Jet.constant(np.ones(a.shape), a.nvars, a.order)
    base = a
    while p:
        if p & 1:
            result = _series_mul(result, base)
        p >>= 1
        if p:
            base = _series_mul(base, base)
    return result


def real_power(a: Jet, p: float) -> Jet:
    a0 = a.value
    if np.any(a0 <= 0.0):
        raise ValueError("non-integer power of a non-positive jet")
    coeffs = []
    binom = 1.0
    for k in range(a.order + 1):
        coeffs.append(binom * a0 ** (p - k))
        binom *= (p - k) / (k + 1)
    return compose(a, np.array(coeffs))


def jexp(a: Jet) -> Jet:
    e = np.exp(a.value)
    return compose(a, np.array([e / math.factorial(k) for k in range(a.order + 1)]))


def jlog(a: Jet) -> Jet:
    a0 = a.value
    if np.any(a0 <= 0.0):
        raise ValueError("log of a non-positive jet")
    coeffs = [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0**k) for k in range(1, a.order + 1)]
    return compose(a, np.array(coeffs))


def jsin(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [s, c, -s, -c]
    return compose(a, np.array([cyc[k % 4] / math.factorial(k) for k in range(a.order + 1)]))


def jcos(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [c, -s, -c, s]
    return compose(a, np.array([cyc[k % 4] / math.factorial(k) for k in range(a.order + 1)]))


def jsqrt(a: Jet) -> Jet:
    return real_power(a, 0.5)


# --------------------------------------------------------------------------
# tensor contractions


def _letters(spec: str):
    lhs, out = spec.replace(" ", "").split("->")
    ins = lhs.split(",")
    return ins, out


def jeinsum(spec: str, *operands) -> Jet:
    """``numpy.einsum``-style contraction where jet entries multiply as series.

    Operands may be jets or plain arrays (treated as constants).  Only
    explicit subscripts are supported.
    """
    ins, out = _letters(spec)
    if len(ins) != len(operands):
        raise ValueError("subscript/operand count mismatch")
    if len(operands) > 2:
        # contract pairwise, keeping every letter still needed downstream
        first, rest = operands[0], operands[1:]
        need = set(out) | set("".join(ins[2:]))
        keep = "".join(dict.fromkeys(c for c in ins[0] + ins[1] if c in need))
        partial = jeinsum(f"{ins[0]},{ins[1]}->{keep}", first, rest[0])
        return jeinsum(",".join([keep] + ins[2:]) + "->" + out, partial, *rest[1:])
    if len(operands) == 1:
        a = operands[0]
        return Jet(np.einsum(f"{ins[0]}z->{out}z", a.coeffs), a.nvars, a.order)
    a, b = operands
    sa, sb = ins
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise TypeError("at least one operand must be a Jet")
    if not isinstance(b, Jet):
        return Jet(np.einsum(f"{sa}z,{sb}->{out}z", a.coeffs, np.asarray(b, float)), a.nvars, a.order)
    if not isinstance(a, Jet):
        return Jet(np.einsum(f"{sa},{sb}z->{out}z", np.asarray(a, float), b.coeffs), b.nvars, b.order)
    letters = "".join(dict.fromkeys(sa + sb))
    sizes = {}
    for s, op in ((sa, a), (sb, b)):
        for c, d in zip(s, op.shape):
            if sizes.setdefault(c, d) != d:
                raise ValueError(f"size mismatch for index {c!r}")

    def aligned(s, op):
        # handle repeated letters (diagonals) on a single operand first
        if len(set(s)) != len(s):
            uniq = "".join(dict.fromkeys(s))
            op = Jet(np.einsum(f"{s}z->{uniq}z", op.coeffs), op.nvars, op.order)
            s = uniq
        perm = [s.index(c) for c in letters if c in s]
        c = np.transpose(op.coeffs, perm + [len(s)])
        shape = [sizes[ch] if ch in s else 1 for ch in letters]
        return Jet(c.reshape(shape + [c.shape[-1]]), op.nvars, op.order)

    prod = _series_mul(aligned(sa, a), aligned(sb, b))
    summed = tuple(i for i, c in enumerate(letters) if c not in out)
    coeffs = prod.coeffs.sum(axis=summed) if summed else prod.coeffs
    remaining = [c for c in letters if c in out]
    perm = [remaining.index(c) for c in out]
    return Jet(np.transpose(coeffs, perm + [len(perm)]), prod.nvars, prod.order)


def jinv(m: Jet) -> Jet:
    """Inverse of a square matrix jet (Neumann series in the nilpotent part)."""
    if m.ndim != 2:
        raise ValueError("jinv expects a 2-d matrix jet")
    inv0 = np.linalg.inv(m.value)
    step = -jeinsum("ij,jk->ik", inv0, _nilpotent(m))
    total = term = Jet.constant(inv0, m.nvars, m.order)
    for _ in range(m.order):
        term = jeinsum("ij,jk->ik", step, term)
        total = total + term
    return total


def jblock(rows) -> Jet:
    """Assemble a 2-d block matrix from nested lists of 2-d jets."""
    jets = [b for row in rows for b in row if isinstance(b, Jet)]
    r = min(j.order for j in jets)
    n = jets[0].nvars
    N = ncoef(n, r)

    def coeffs(b):
        if isinstance(b, Jet):
            return b.coeffs[..., :N]
        return Jet.constant(b, n, r).coeffs

    return Jet(np.block([[coeffs(b).transpose(2, 0, 1) for b in row] for row in rows]).transpose(1, 2, 0), n, r)


def matmul(a, b) -> Jet:
    """Matrix product (jets or arrays) on 2-d operands."""
    return jeinsum("ij,jk->ik", a, b)


def matvec(a, v) -> Jet:
    return jeinsum("ij,j->i", a, v)


# --------------------------------------------------------------------------
# expression evaluation


def eval_jet(expr: ScalarExpr, point, order: int) -> Jet:
    """Exact truncated Taylor expansion of ``expr`` at ``point`` in ``(x, y)``.

    Raises :class:`~tangent_forge.expr.DomainError` naming the offending node
    when evaluation leaves a node's domain.
    """
    if not 0 <= order <= MAX_ORDER:
        raise JetOrderError(f"order must lie in 0..{MAX_ORDER}, got {order}")
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or len(point) % 2:
        raise ValueError("point must be a flat vector (x1..xm, y1..ym)")
    return _eval(expr, point, order, {})


def _eval(node: ScalarExpr, point, order, memo) -> Jet:
    key = id(node)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    n = len(point)
    m = n // 2
    if isinstance(node, Const):
        res = Jet.constant(node.value, n, order)
    elif isinstance(node, Var):
        if node.index >= m:
            raise IndexError(f"variable {node} outside chart of dimension {m}")
        res = Jet.variable(node.index if node.kind == "x" else m + node.index, point, order)
    elif isinstance(node, Add):
        res = _eval(node.left, point, order, memo) + _eval(node.right, point, order, memo)
    elif isinstance(node, Sub):
        res = _eval(node.left, point, order, memo) - _eval(node.right, point, order, memo)
    elif isinstance(node, Mul):
        res = _eval(node.left, point, order, memo) * _eval(node.right, point, order, memo)
    elif isinstance(node, Neg):
        res = -_eval(node.arg, point, order, memo)
    elif isinstance(node, Div):
        den = _eval(node.right, point, order, memo)
        if den.value == 0.0:
            raise DomainError(node, "division by zero")
        res = _eval(node.left, point, order, memo) * reciprocal(den)
    elif isinstance(node, Pow):
        base = _eval(node.base, point, order, memo)
        if node.is_integer:
            if node.exponent < 0 and base.value == 0.0:
                raise DomainError(node, "negative power of zero")
            res = integer_power(base, int(node.exponent))
        else:
            if base.value <= 0.0:
                raise DomainError(node, "non-integer power of a non-positive base")
            res = real_power(base, node.exponent)
    elif isinstance(node, Func):
        arg = _eval(node.arg, point, order, memo)
        if node.name in ("log", "sqrt") and arg.value <= 0.0:
            raise DomainError(node, f"{node.name} of a non-positive value")
        res = {"exp": jexp, "log": jlog, "sin": jsin, "cos": jcos, "sqrt": jsqrt}[node.name](arg)
    else:
        raise TypeError(f"unknown node {node!r}")
    memo[key] = (node, res)
    return res


def differentiate_field(grid, point, order: int) -> Jet:
    """Componentwise :func:`eval_jet` over an array of expressions; shape kept."""
    arr = np.asarray(grid, dtype=object)
    point = np.asarray(point, dtype=float)
    memo: dict = {}
    if not 0 <= order <= MAX_ORDER:
        raise JetOrderError(f"order must lie in 0..{MAX_ORDER}, got {order}")
    coeffs = np.empty(arr.shape + (ncoef(len(point), order),))
    for idx, e in np.ndenumerate(arr):
        coeffs[idx] = _eval(e, point, order, memo).coeffs
    return Jet(coeffs, len(point), order)
