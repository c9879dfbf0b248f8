"""Kinematics of the tangent manifold: adapted frames, S, S', P_H, lifts,
brackets, Ehresmann curvature, Nijenhuis tensors and tangent metrics.

Adapted components are ordered ``(X_1..X_m, d/dy^1..d/dy^m)``.  The frame
matrix ``F`` has the frame vectors as columns in coordinate components, so
``z_coord = F @ z_adapted``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from string import ascii_letters

import numpy as np

from .bundle import ConstructionError, ExprField, FuncField, NonlinearConnection, VelocityTensor, as_field
from .expr import Const
from .jets import Jet, jblock, jeinsum


# --------------------------------------------------------------------------
# constant endomorphisms in the adapted frame


def tangent_structure_matrix(m: int) -> np.ndarray:
    """``S``: ``X_i -> d/dy^i``, kills the vertical bundle."""
    s = np.zeros((2 * m, 2 * m))
    s[m:, :m] = np.eye(m)
    return s


def s_prime_matrix(m: int) -> np.ndarray:
    """``S'``: ``d/dy^i -> X_i``, kills the horizontal bundle."""
    s = np.zeros((2 * m, 2 * m))
    s[:m, m:] = np.eye(m)
    return s


def paracomplex_matrix(m: int) -> np.ndarray:
    return tangent_structure_matrix(m) + s_prime_matrix(m)


def horizontal_projector(m: int) -> np.ndarray:
    return np.diag(np.r_[np.ones(m), np.zeros(m)])


def vertical_projector(m: int) -> np.ndarray:
    return np.diag(np.r_[np.zeros(m), np.ones(m)])


# --------------------------------------------------------------------------
# adapted frame at a point


class LocalFrame:
    """Jets of the adapted frame of a nonlinear connection at one point.

    ``order`` is the jet order of the connection coefficients; structure
    functions carry one order less.
    """

    def __init__(self, connection: NonlinearConnection, point, order: int):
        self.connection = connection
        self.point = np.asarray(point, dtype=float)
        self.m = connection.m
        if len(self.point) != 2 * self.m:
            raise ConstructionError(f"point has {len(self.point)} coordinates, chart needs {2 * self.m}")
        self.n = 2 * self.m
        self.order = order
        t = connection.jet(self.point, order)
        eye = np.eye(self.m)
        zero = np.zeros((self.m, self.m))
        self.t = t
        self.F = jblock([[eye, zero], [-t.T, eye]])
        self.Finv = jblock([[eye, zero], [t.T, eye]])

    @property
    def nvars(self) -> int:
        return self.n

    def constant(self, value, order=None) -> Jet:
        return Jet.constant(value, self.n, self.order if order is None else order)

    def d(self, f: Jet) -> Jet:
        """Frame derivatives ``E_c f`` appended as a new last axis."""
        grad = f.gradient()
        F = self.F.truncate(min(grad.order, self.F.order))
        letters = ascii_letters[: f.ndim]
        return jeinsum(f"{letters}Y,YZ->{letters}Z", grad, F)

    @cached_property
    def structure(self) -> Jet:
        """``c[a, c, b]`` with ``[E_c, E_b] = c^a_{cb} E_a`` (order ``order - 1``)."""
        gradF = self.F.gradient()  # [mu, b, nu] = d_nu F^mu_b
        F = self.F.truncate(gradF.order)
        push = jeinsum("MBV,VC->MCB", gradF, F)
        br = push - push.transpose(0, 2, 1)
        return jeinsum("AM,MCB->ACB", self.Finv.truncate(gradF.order), br)

    def bracket(self, u: Jet, v: Jet) -> Jet:
        """Bracket of two fields given by adapted-component jets."""
        du, dv = self.d(u), self.d(v)
        r = min(du.order, dv.order)
        u1, v1 = u.truncate(r), v.truncate(r)
        c = self.structure.truncate(min(r, self.structure.order))
        return (jeinsum("C,AC->A", u1, dv) - jeinsum("C,AC->A", v1, du)
                + jeinsum("C,B,ACB->A", u1.truncate(c.order), v1.truncate(c.order), c))

    def to_coordinate(self, z):
        return jeinsum("MA,A->M", self.F, z) if isinstance(z, Jet) else self.F.value @ z

    def to_adapted(self, z):
        return jeinsum("AM,M->A", self.Finv, z) if isinstance(z, Jet) else self.Finv.value @ z

    def frame_field(self, a: int, order=None) -> Jet:
        e = np.zeros(self.n)
        e[a] = 1.0
        return self.constant(e, order)

    def ehresmann(self) -> np.ndarray:
        """``R[k, i, j]``: vertical component ``k`` of ``R_H(X_i, X_j)`` at the point."""
        m = self.m
        return self.structure.value[m:, :m, :m]


# --------------------------------------------------------------------------
# vectors


@dataclass(frozen=True)
class TTVector:
    """Tangent vector of the tangent manifold at ``point``."""

    point: np.ndarray
    components: np.ndarray
    frame: str = "adapted"

    def __post_init__(self):
        if self.frame not in ("adapted", "coordinate"):
            raise ValueError(f"unknown frame tag {self.frame!r}")

    @property
    def m(self) -> int:
        return len(self.components) // 2

    def in_frame(self, frame: str, local: LocalFrame) -> "TTVector":
        if frame == self.frame:
            return self
        comp = local.to_coordinate(self.components) if frame == "coordinate" else local.to_adapted(self.components)
        return TTVector(self.point, np.asarray(comp), frame)

    def horizontal(self, local: LocalFrame) -> "TTVector":
        a = self.in_frame("adapted", local).components
        return TTVector(self.point, horizontal_projector(self.m) @ a, "adapted")

    def vertical(self, local: LocalFrame) -> "TTVector":
        a = self.in_frame("adapted", local).components
        return TTVector(self.point, vertical_projector(self.m) @ a, "adapted")


def _adapted(z: TTVector, local: LocalFrame) -> np.ndarray:
    return z.in_frame("adapted", local).components


def tangent_structure(z: TTVector, local: LocalFrame) -> TTVector:
    return TTVector(z.point, tangent_structure_matrix(local.m) @ _adapted(z, local))


def s_prime(z: TTVector, local: LocalFrame) -> TTVector:
    return TTVector(z.point, s_prime_matrix(local.m) @ _adapted(z, local))


def p_h(z: TTVector, local: LocalFrame) -> TTVector:
    return TTVector(z.point, paracomplex_matrix(local.m) @ _adapted(z, local))


class VectorFieldExpr:
    """Vector field on the chart: ``2m`` component fields with a frame tag."""

    def __init__(self, components, frame: str = "coordinate"):
        self.field = as_field(components)
        if frame not in ("adapted", "coordinate"):
            raise ValueError(f"unknown frame tag {frame!r}")
        if len(self.field.shape) != 1 or self.field.shape[0] % 2:
            raise ConstructionError("a vector field needs 2m components")
        self.frame = frame

    @property
    def m(self) -> int:
        return self.field.shape[0] // 2

    def coordinate_jet(self, local: LocalFrame, order: int) -> Jet:
        z = self.field.jet(local.point, order)
        if self.frame == "coordinate":
            return z
        return jeinsum("MA,A->M", local.F.truncate(min(order, local.order)), z)

    def adapted_jet(self, local: LocalFrame, order: int) -> Jet:
        z = self.field.jet(local.point, order)
        if self.frame == "adapted":
            return z
        return jeinsum("AM,M->A", local.Finv.truncate(min(order, local.order)), z)


def coordinate_bracket(u: Jet, v: Jet) -> Jet:
    """``[U, V]^i = U^j d_j V^i - V^j d_j U^i`` on coordinate-component jets."""
    du, dv = u.gradient(), v.gradient()
    return jeinsum("J,IJ->I", u.truncate(dv.order), dv) - jeinsum("J,IJ->I", v.truncate(du.order), du)


def _local(connection, point, order=1) -> LocalFrame:
    if isinstance(connection, LocalFrame):
        return connection
    if connection is None:
        raise ConstructionError("an adapted-frame field needs a nonlinear connection")
    return LocalFrame(connection, point, order)


def lie_bracket(z1: VectorFieldExpr, z2: VectorFieldExpr, point, connection=None) -> TTVector:
    """Coordinate-frame bracket of two fields at ``point``."""
    point = np.asarray(point, dtype=float)
    if z1.frame == z2.frame == "coordinate":
        u, v = z1.field.jet(point, 1), z2.field.jet(point, 1)
    else:
        local = _local(connection, point, 1)
        u, v = z1.coordinate_jet(local, 1), z2.coordinate_jet(local, 1)
    return TTVector(point, coordinate_bracket(u, v).value, "coordinate")


def ehresmann_curvature(z1: VectorFieldExpr, z2: VectorFieldExpr, point, connection) -> TTVector:
    """``R_H(Z1, Z2) = pr_V [pr_H Z1, pr_H Z2]`` (adapted components)."""
    local = _local(connection, point, 1)
    proj = horizontal_projector(local.m)
    u = jeinsum("AB,B->A", proj, z1.adapted_jet(local, 1))
    v = jeinsum("AB,B->A", proj, z2.adapted_jet(local, 1))
    br = coordinate_bracket(local.to_coordinate(u), local.to_coordinate(v))
    out = vertical_projector(local.m) @ local.Finv.value @ br.value
    return TTVector(local.point, out, "adapted")


def nijenhuis(endo, z1: VectorFieldExpr, z2: VectorFieldExpr, point, connection=None) -> TTVector:
    """``N(Z1, Z2) = [AZ1, AZ2] - A[AZ1, Z2] - A[Z1, AZ2] + A^2[Z1, Z2]``.

    ``endo`` is a coordinate-frame ``(2m, 2m)`` field (or a constant matrix).
    Fields in the adapted frame are converted with ``connection``.
    """
    point = np.asarray(point, dtype=float)
    n = z1.m * 2
    if isinstance(endo, np.ndarray) and endo.dtype != object:
        A = Jet.constant(endo, n, 1)
    else:
        A = as_field(endo).jet(point, 1)
    if z1.frame == z2.frame == "coordinate":
        u, v = z1.field.jet(point, 1), z2.field.jet(point, 1)
    else:
        local = _local(connection, point, 1)
        u, v = z1.coordinate_jet(local, 1), z2.coordinate_jet(local, 1)
    Au, Av = jeinsum("IJ,J->I", A, u), jeinsum("IJ,J->I", A, v)
    A0 = A.value
    out = (coordinate_bracket(Au, Av).value - A0 @ coordinate_bracket(Au, v).value
           - A0 @ coordinate_bracket(u, Av).value + A0 @ A0 @ coordinate_bracket(u, v).value)
    return TTVector(point, out, "coordinate")


def tangent_structure_field(m: int) -> np.ndarray:
    """``S`` in the coordinate frame (it does not depend on the connection)."""
    return tangent_structure_matrix(m)


# --------------------------------------------------------------------------
# lifts


def _base_grid(components, m: int) -> np.ndarray:
    grid = as_field(components)
    if not isinstance(grid, ExprField) or grid.shape != (m,):
        raise ConstructionError(f"lift input must be {m} expressions")
    if grid.depends_on("y"):
        raise ConstructionError("lift input must depend on x only")
    return grid.grid


def _transport_term(base: ExprField, point, order: int, m: int) -> Jet:
    """``y^j d_j a_i`` for an x-only field ``a``."""
    a = base.jet(point, order + 1)
    grad = a.gradient()[:, :m]
    ys = Jet.stack([Jet.variable(m + j, point, order) for j in range(m)])
    return jeinsum("ij,j->i", grad, ys)


def lift(components, kind: str, m: int, connection: NonlinearConnection | None = None) -> VectorFieldExpr:
    """Vertical, complete or horizontal lift of a vector field ``xi^i d/dx^i``.

    Returns a coordinate-frame :class:`VectorFieldExpr`.
    """
    base = ExprField(_base_grid(components, m))
    if kind == "vertical":
        return VectorFieldExpr(np.r_[[Const(0.0)] * m, base.grid].astype(object))
    if kind == "complete":
        def fn(point, order):
            return Jet.stack(list(base.jet(point, order)[i] for i in range(m))
                             + list(_transport_term(base, point, order, m)[i] for i in range(m)))

        return VectorFieldExpr(FuncField((2 * m,), fn, base.max_order - 1))
    if kind == "horizontal":
        if connection is None:
            raise ConstructionError("horizontal lift needs a nonlinear connection")

        def fn(point, order):
            t = connection.jet(point, order)
            xi = base.jet(point, order)
            return Jet.stack([xi[i] for i in range(m)] + [-jeinsum("i,i->", xi, t[:, j]) for j in range(m)])

        return VectorFieldExpr(FuncField((2 * m,), fn, connection.max_order))
    raise ValueError(f"unknown lift kind {kind!r}")


def lift_form(components, kind: str, m: int):
    """Coordinate components ``(dx-part, dy-part)`` of ``alpha^v`` or ``alpha^c``."""
    base = ExprField(_base_grid(components, m))
    if kind == "vertical":
        return ExprField(np.r_[base.grid, [Const(0.0)] * m].astype(object))
    if kind == "complete":
        def fn(point, order):
            a = base.jet(point, order)
            return Jet.stack(list(_transport_term(base, point, order, m)[i] for i in range(m))
                             + list(a[i] for i in range(m)))

        return FuncField((2 * m,), fn, base.max_order - 1)
    raise ValueError(f"unknown lift kind {kind!r}")


# --------------------------------------------------------------------------
# tangent metrics


@dataclass
class TangentMetric:
    """``gamma`` determined by a horizontal bundle and a horizontal metric."""

    connection: NonlinearConnection
    g: VelocityTensor

    def adapted(self, point, order: int) -> Jet:
        gj = self.g.jet(point, order)
        zero = np.zeros(gj.shape)
        return jblock([[gj, zero], [zero, gj]])

    def coordinate(self, local: LocalFrame, order: int | None = None) -> Jet:
        order = local.order if order is None else order
        G = self.adapted(local.point, order)
        Finv = local.Finv.truncate(min(order, local.order))
        return jeinsum("AM,AB,BN->MN", Finv, G, Finv)

    def residuals(self, point) -> dict:
        m = self.g.shape[0]
        G = self.adapted(point, 0).value
        S, P = tangent_structure_matrix(m), paracomplex_matrix(m)
        H = np.eye(2 * m)[:, :m]
        return {
            "mixed_block": float(np.max(np.abs(G[:m, m:]))),
            "tangent_condition": float(np.max(np.abs((S @ H).T @ G @ (S @ H) - H.T @ G @ H))),
            "paracomplex_symmetry": float(np.max(np.abs(P.T @ G - G @ P))),
        }


def tangent_metric_from(connection: NonlinearConnection, g: VelocityTensor, points=None) -> TangentMetric:
    if points is not None:
        VelocityTensor(g.field, "symmetric").check(points)
        g.require_nondegenerate(points)
    return TangentMetric(connection, g)
