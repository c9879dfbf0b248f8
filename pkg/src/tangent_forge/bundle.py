"""Chart, velocity-dependent input tensors and nonlinear connections.

Index layout used everywhere: a point is ``(x1..xm, y1..ym)`` and the
connection grid is ``t[i, j] = t_i^j``, so the horizontal frame vector is
``X_i = d/dx^i - t[i, j] d/dy^j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import ScalarExpr, evaluate, parse, parse_grid, variables
from .jets import MAX_ORDER, Jet, JetOrderError, differentiate_field, eval_jet, jeinsum, jinv


class ConstructionError(ValueError):
    """Input data violates a precondition of a geometric construction."""


# --------------------------------------------------------------------------
# chart


@dataclass(frozen=True)
class ChartSpec:
    """Single chart ``x in x_box``, ``y in y_box`` of the tangent manifold.

    ``zero_section_margin`` > 0 declares a Finsler-type chart: sample points
    with ``|y| < margin`` are rejected and the y-box must not contain ``y = 0``.
    """

    m: int
    x_box: tuple
    y_box: tuple
    zero_section_margin: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ConstructionError("chart dimension m must be >= 1")
        for name, box in (("x_box", self.x_box), ("y_box", self.y_box)):
            if len(box) != self.m:
                raise ConstructionError(f"{name} needs {self.m} intervals, got {len(box)}")
            for lo, hi in box:
                if not lo < hi:
                    raise ConstructionError(f"empty interval ({lo}, {hi}) in {name}")
        if self.zero_section_margin > 0 and self.contains_zero_section():
            raise ConstructionError("a chart excluding the zero section needs a y-box bounded away from 0")

    @classmethod
    def cube(cls, m: int, x=(-1.0, 1.0), y=(-1.0, 1.0), zero_section_margin: float = 0.0):
        return cls(m, tuple([tuple(x)] * m), tuple([tuple(y)] * m), zero_section_margin)

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def bounds(self) -> np.ndarray:
        return np.array(list(self.x_box) + list(self.y_box), dtype=float)

    def contains_zero_section(self) -> bool:
        return all(lo < 0.0 < hi for lo, hi in self.y_box)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        b = self.bounds
        inside = bool(np.all(p > b[:, 0]) and np.all(p < b[:, 1]))
        if inside and self.zero_section_margin > 0:
            inside = np.linalg.norm(p[self.m:]) >= self.zero_section_margin
        return inside

    def sample_points(self, count: int = 50, seed: int = 0, margin: float = 0.05) -> np.ndarray:
        """``count`` seeded points strictly inside the box (shrunk by ``margin``)."""
        rng = np.random.default_rng(seed)
        b = self.bounds
        width = b[:, 1] - b[:, 0]
        lo, hi = b[:, 0] + margin * width, b[:, 1] - margin * width
        out = []
        while len(out) < count:
            p = rng.uniform(lo, hi)
            if self.contains(p):
                out.append(p)
        return np.array(out)


# --------------------------------------------------------------------------
# fields


class ExprField:
    """Array of expressions evaluated exactly through jets.

    Entries may be expressions, numbers or expression strings.
    """

    def __init__(self, grid):
        self.grid = parse_grid(grid)

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    max_order = MAX_ORDER

    def jet(self, point, order: int) -> Jet:
        return differentiate_field(self.grid, point, order)

    def value(self, point) -> np.ndarray:
        out = np.empty(self.shape)
        for idx, e in np.ndenumerate(self.grid):
            out[idx] = evaluate(e, point)
        return out

    def depends_on(self, kind: str) -> bool:
        return any(v.kind == kind for e in self.grid.flat for v in variables(e))


class FuncField:
    """Field whose jet is produced by a function ``(point, order) -> Jet``."""

    def __init__(self, shape, fn: Callable, max_order: int = MAX_ORDER):
        self._shape = tuple(shape)
        self.fn = fn
        self.max_order = max_order

    @property
    def shape(self) -> tuple:
        return self._shape

    def jet(self, point, order: int) -> Jet:
        if order > self.max_order:
            raise JetOrderError(
                f"derived field supports jets up to order {self.max_order}, {order} requested"
            )
        return self.fn(np.asarray(point, dtype=float), order)

    def value(self, point) -> np.ndarray:
        return self.jet(point, 0).value


def as_field(obj):
    if isinstance(obj, (ExprField, FuncField)):
        return obj
    if isinstance(obj, VelocityTensor):
        return obj.field
    return ExprField(obj)


# --------------------------------------------------------------------------
# velocity-dependent tensors


SYMMETRIES = ("symmetric", "antisymmetric", None)


@dataclass
class VelocityTensor:
    """Tensor on the pulled-back bundle with components in ``(x, y)``.

    ``variance`` is informational ("(0,2)", "(1,1)", "(2,0)"); ``symmetry``
    is checked numerically by :meth:`check`.
    """

    field: object
    symmetry: str | None = None
    variance: str = "(0,2)"

    def __post_init__(self):
        self.field = as_field(self.field)
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry {self.symmetry!r}")

    @classmethod
    def parse(cls, rows, m: int, symmetry=None, variance="(0,2)") -> "VelocityTensor":
        return cls(ExprField(parse_grid(rows, m)), symmetry, variance)

    @classmethod
    def constant(cls, matrix, symmetry=None, variance="(0,2)") -> "VelocityTensor":
        from .expr import as_expr

        grid = np.vectorize(as_expr, otypes=[object])(np.asarray(matrix, dtype=float))
        return cls(ExprField(grid), symmetry, variance)

    @property
    def shape(self) -> tuple:
        return self.field.shape

    def jet(self, point, order: int) -> Jet:
        return self.field.jet(point, order)

    def value(self, point) -> np.ndarray:
        return self.field.value(point)

    def symmetry_residual(self, points) -> float:
        if self.symmetry is None:
            return 0.0
        sign = 1.0 if self.symmetry == "symmetric" else -1.0
        return max(float(np.max(np.abs(a - sign * a.T), initial=0.0))
                   for a in (self.value(p) for p in points))

    def check(self, points, tol: float = 1e-12) -> None:
        r = self.symmetry_residual(points)
        if r > tol:
            raise ConstructionError(f"declared {self.symmetry} tensor violates symmetry by {r:.3e}")

    def require_nondegenerate(self, points, tol: float = 1e-10) -> None:
        for p in points:
            d = abs(np.linalg.det(self.value(p)))
            if d < tol:
                raise ConstructionError(f"degenerate tensor at point {np.round(p, 6).tolist()} (|det| = {d:.3e})")

    def projectability_defect(self, points) -> float:
        """Max ``|d a / d y|`` over the points; 0 for x-projectable tensors."""
        if isinstance(self.field, ExprField) and not self.field.depends_on("y"):
            return 0.0
        worst = 0.0
        for p in points:
            g = self.jet(p, 1).gradient().value
            m = len(p) // 2
            worst = max(worst, float(np.max(np.abs(g[..., m:]), initial=0.0)))
        return worst


# --------------------------------------------------------------------------
# nonlinear connections


PROVENANCES = ("explicit", "levi-civita", "spray")


@dataclass
class NonlinearConnection:
    """Coefficients ``t[i, j] = t_i^j(x, y)`` of a horizontal bundle."""

    field: object
    provenance: str = "explicit"
    source: object = None

    def __post_init__(self):
        self.field = as_field(self.field)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if len(self.field.shape) != 2 or self.field.shape[0] != self.field.shape[1]:
            raise ConstructionError("connection coefficients must form an m x m grid")

    @classmethod
    def flat(cls, m: int) -> "NonlinearConnection":
        return cls(VelocityTensor.constant(np.zeros((m, m))).field)

    @classmethod
    def parse(cls, rows, m: int) -> "NonlinearConnection":
        return cls(ExprField(parse_grid(rows, m)))

    @property
    def m(self) -> int:
        return self.field.shape[0]

    @property
    def max_order(self) -> int:
        return self.field.max_order

    def jet(self, point, order: int) -> Jet:
        return self.field.jet(point, order)

    def value(self, point) -> np.ndarray:
        return self.field.value(point)

    def y_linearity_defect(self, points) -> float:
        worst = 0.0
        for p in points:
            m = len(p) // 2
            h = self.jet(p, 2)
            for k in range(m):
                for l in range(m):
                    worst = max(worst, float(np.max(np.abs(h.partial(m + k).partial(m + l).value))))
        return worst


@dataclass
class LagrangianSpec:
    """Scalar Lagrangian ``L(x, y)`` with a regularity certificate."""

    expr: ScalarExpr
    m: int
    certificate: float | None = None

    def hessian(self, point, order: int = 0) -> Jet:
        m = self.m
        L = eval_jet(self.expr, point, order + 2)
        return Jet.stack([Jet.stack([L.partial(m + i).partial(m + j) for j in range(m)])
                          for i in range(m)])

    def certify(self, points, tol: float = 1e-10) -> float:
        worst = np.inf
        for p in points:
            d = abs(np.linalg.det(self.hessian(p).value))
            if d < tol:
                raise ConstructionError(
                    f"singular Lagrangian Hessian at point {np.round(p, 6).tolist()} (|det| = {d:.3e})"
                )
            worst = min(worst, d)
        self.certificate = float(worst)
        return self.certificate

    def hessian_metric(self) -> VelocityTensor:
        """``g_ij = d^2 L / dy^i dy^j`` as a derived symmetric tensor."""
        def fn(point, order):
            if order + 2 > MAX_ORDER:
                raise JetOrderError(f"Hessian metric jets need L at order {order + 2} > {MAX_ORDER}")
            return self.hessian(point, order)

        return VelocityTensor(FuncField((self.m, self.m), fn, MAX_ORDER - 2), "symmetric")


def _christoffel(s: Jet, m: int) -> Jet:
    """``Gamma[j, i, k] = Gamma^j_{ik}`` of an x-only metric jet (order drops by one)."""
    ds = s.gradient()[:, :, :m]  # ds[l, k, i] = d_i s_lk
    sinv = jinv(s.truncate(ds.order))
    lower = 0.5 * (ds.transpose(0, 2, 1) + ds - ds.transpose(2, 0, 1))  # [l, i, k]
    return jeinsum("jl,lik->jik", sinv, lower)


def connection_from_base_metric(s: VelocityTensor, points=None) -> NonlinearConnection:
    """``t_i^j = Gamma^j_{ik}(x) y^k`` for the Levi-Civita connection of ``s``."""
    if isinstance(s.field, ExprField) and s.field.depends_on("y"):
        raise ConstructionError("base metric must depend on x only")
    if points is not None:
        VelocityTensor(s.field, "symmetric").check(points)
        s.require_nondegenerate(points)
    m = s.shape[0]

    def fn(point, order):
        sj = s.jet(point, order + 1)
        if abs(np.linalg.det(sj.value)) < 1e-14:
            raise ConstructionError(f"degenerate base metric at point {np.round(point, 6).tolist()}")
        gam = _christoffel(sj, m)
        yv = Jet.stack([Jet.variable(m + k, point, order) for k in range(m)])
        return jeinsum("jik,k->ij", gam, yv)

    return NonlinearConnection(FuncField((m, m), fn, MAX_ORDER - 1), "levi-civita", s)


def connection_from_lagrangian(L: LagrangianSpec, points=None) -> NonlinearConnection:
    """Spray connection ``t_i^j = dG^j / dy^i`` with
    ``G^j = 1/4 g^{jl} (d^2L/dy^l dx^k y^k - dL/dx^l)`` and ``g = 1/2 Hess_y L``.
    """
    m = L.m
    if points is not None:
        L.certify(points)

    def fn(point, order):
        if order + 3 > MAX_ORDER:
            raise JetOrderError(
                f"spray coefficients at jet order {order} need L at order {order + 3} > {MAX_ORDER}"
            )
        Lj = eval_jet(L.expr, point, order + 3)
        dy = [Lj.partial(m + l) for l in range(m)]
        hess = Jet.stack([Jet.stack([dy[l].partial(m + k) for k in range(m)]) for l in range(m)])
        if abs(np.linalg.det(hess.value)) < 1e-14:
            raise ConstructionError(f"singular Lagrangian Hessian at point {np.round(point, 6).tolist()}")
        ginv = jinv(0.5 * hess)
        mixed = Jet.stack([Jet.stack([dy[l].partial(k) for k in range(m)]) for l in range(m)])
        yv = Jet.stack([Jet.variable(m + k, point, order + 1) for k in range(m)])
        dx = Jet.stack([Lj.partial(l) for l in range(m)])
        rhs = jeinsum("lk,k->l", mixed, yv) - dx
        G = 0.25 * jeinsum("jl,l->j", ginv, rhs)
        return Jet.stack([Jet.stack([G[j].partial(m + i) for j in range(m)]) for i in range(m)])

    return NonlinearConnection(FuncField((m, m), fn, MAX_ORDER - 3), "spray", L)


# --------------------------------------------------------------------------
# change of coordinates


def _map_jets(change: Sequence[ScalarExpr], point) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian ``J[j, k] = dx~^j/dx^k`` and Hessian ``H[j, h, l]`` at ``point``."""
    m = len(change)
    J = np.empty((m, m))
    H = np.empty((m, m, m))
    for j, e in enumerate(change):
        f = eval_jet(e, point, 2)
        for k in range(m):
            J[j, k] = f.partial(k).value
            for l in range(m):
                H[j, k, l] = f.partial(k).partial(l).value
    return J, H


def transformed_coefficients_pushforward(t: NonlinearConnection, change, point) -> np.ndarray:
    """New coefficients obtained by pushing the horizontal frame through the
    induced tangent map ``(x, y) -> (x~(x), J(x) y)``."""
    m = len(change)
    J, H = _map_jets(change, point)
    y = np.asarray(point[m:], dtype=float)
    dPhi = np.zeros((2 * m, 2 * m))
    dPhi[:m, :m] = J
    dPhi[m:, :m] = np.einsum("jhl,l->jh", H, y)
    dPhi[m:, m:] = J
    frame = np.vstack([np.eye(m), -t.value(point).T])
    W = dPhi @ frame
    # columns of W span the image horizontal space; normalise the x-part to the identity
    return -(W[m:] @ np.linalg.inv(W[:m])).T


def transformed_coefficients_formula(t: NonlinearConnection, change, point) -> np.ndarray:
    """``t~_i^j = J^j_k Jinv^h_i t_h^k - Jinv^h_i H^j_{hl} y^l``."""
    m = len(change)
    J, H = _map_jets(change, point)
    if abs(np.linalg.det(J)) < 1e-12:
        raise ConstructionError(f"singular Jacobian at point {np.round(point, 6).tolist()}")
    Jinv = np.linalg.inv(J)
    y = np.asarray(point[m:], dtype=float)
    return (np.einsum("jk,hi,hk->ij", J, Jinv, t.value(point))
            - np.einsum("hi,jhl,l->ij", Jinv, H, y))


def validate_connection_transformation(t: NonlinearConnection, change, points) -> float:
    """Max discrepancy between the frame pushforward and the closed-form rule."""
    change = [e if isinstance(e, ScalarExpr) else parse(e) for e in change]
    worst = 0.0
    for p in points:
        J, _ = _map_jets(change, p)
        if abs(np.linalg.det(J)) < 1e-12:
            raise ConstructionError(f"singular Jacobian at point {np.round(p, 6).tolist()}")
        a = transformed_coefficients_pushforward(t, change, p)
        b = transformed_coefficients_formula(t, change, p)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst
