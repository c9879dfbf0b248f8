"""Velocity-dependent generalized almost complex structures and their transfer.

Pairs ``(X, alpha)`` of the bundle ``H + H*`` are stored as ``2m`` component
vectors: horizontal components in the frame ``X_i`` followed by the components
of ``alpha`` in ``dx^i``.  A structure is the block matrix
``[[A, w], [b, -A^T]]`` where ``(#_w alpha)^i = w^{ij} alpha_j`` and
``(flat_b X)_i = b_{ij} X^j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import ConstructionError, NonlinearConnection
from .frames import LocalFrame
from .genmetric import GeneralizedSasakiMetric, neutral_metric, sasaki_metric
from .jets import Jet, jblock, jeinsum, jinv


def field_jet(obj, point, order: int) -> Jet:
    """Jet of a field, a jet or a constant array at ``point``."""
    if isinstance(obj, Jet):
        return obj.truncate(min(order, obj.order))
    if hasattr(obj, "jet"):
        return obj.jet(point, order)
    return Jet.constant(np.asarray(obj, dtype=float), len(point), order)


# --------------------------------------------------------------------------
# structures


@dataclass
class VdgAlmostComplex:
    """Blocks ``(A, w, b)`` of a velocity-dependent generalized almost complex structure."""

    A: object
    w: object
    b: object

    def blocks(self, point, order: int) -> tuple[Jet, Jet, Jet]:
        point = np.asarray(point, dtype=float)
        return tuple(field_jet(f, point, order) for f in (self.A, self.w, self.b))

    def jet(self, point, order: int) -> Jet:
        A, w, b = self.blocks(point, order)
        return jblock([[A, w], [b, -A.T]])

    def invariant_residuals(self, point) -> dict:
        A, w, b = (j.value for j in self.blocks(point, 0))
        m = A.shape[0]
        J = np.block([[A, w], [b, -A.T]])
        g = neutral_metric(m)
        return {
            "square": float(np.max(np.abs(A @ A + w @ b + np.eye(m)))),
            "a_w": float(np.max(np.abs(A @ w - w @ A.T))),
            "a_b": float(np.max(np.abs(A.T @ b - b @ A))),
            "w_antisymmetric": float(np.max(np.abs(w + w.T))),
            "b_antisymmetric": float(np.max(np.abs(b + b.T))),
            "neutral_compatible": float(np.max(np.abs(g @ J + (g @ J).T))),
        }

    def check(self, points, tol: float = 1e-12) -> None:
        for p in points:
            bad = {k: v for k, v in self.invariant_residuals(p).items() if v > tol}
            if bad:
                worst = max(bad, key=bad.get)
                raise ConstructionError(
                    f"not a generalized almost complex structure at {np.round(p, 6).tolist()}: "
                    f"{worst} residual {bad[worst]:.3e}")


def symplectic_structure(omega) -> VdgAlmostComplex:
    """``A = 0``, ``b = omega`` and ``w`` the inverse bivector with ``#_w flat_b = -Id``."""
    if isinstance(omega, np.ndarray):
        return VdgAlmostComplex(np.zeros_like(omega), -np.linalg.inv(omega), omega)

    class _Inverse:
        def jet(self, point, order):
            return -jinv(field_jet(omega, point, order))

    m = omega.shape[0]
    return VdgAlmostComplex(np.zeros((m, m)), _Inverse(), omega)


def complex_structure(A) -> VdgAlmostComplex:
    m = A.shape[0]
    z = np.zeros((m, m))
    return VdgAlmostComplex(A, z, z)


def split_blocks(J: Jet) -> tuple[Jet, Jet, Jet]:
    m = J.shape[0] // 2
    return J[:m, :m], J[:m, m:], J[m:, :m]


# --------------------------------------------------------------------------
# transfer to the tangent manifold


def transfer_J(J: Jet, sigma: Jet) -> Jet:
    """``i J i^{-1}`` with ``i(X, alpha) = X + S #_gamma alpha``.

    In adapted components this is
    ``[[A, #_w sigma], [sigma^{-1} flat_b, -sigma^{-1} A^T sigma]]``.
    """
    m = sigma.shape[0]
    r = min(J.order, sigma.order)
    J, sigma = J.truncate(r), sigma.truncate(r)
    e, z = np.eye(m), np.zeros((m, m))
    i = jblock([[e, z], [z, jinv(sigma)]])
    iinv = jblock([[e, z], [z, sigma]])
    return jeinsum("ab,bc,cd->ad", i, J, iinv)


def transfer_J_formula(A: np.ndarray, w: np.ndarray, b: np.ndarray, sigma: np.ndarray, z) -> np.ndarray:
    """Pointwise evaluation of the displayed transfer formula on one vector."""
    m = A.shape[0]
    u, v = z[:m], z[m:]
    flat_sv = sigma @ v  # flat_gamma(S'Z)
    hor = A @ u + w @ flat_sv
    ver = np.linalg.solve(sigma, b @ u - A.T @ flat_sv)
    return np.r_[hor, ver]


def compatibility_residuals(JT: np.ndarray, sigma: np.ndarray) -> dict:
    """Neutral-metric compatibility, in the ``g_H`` form and in the ``gamma(P_H J., .)`` form."""
    m = sigma.shape[0]
    z = np.zeros((m, m))
    gH = 0.5 * np.block([[z, sigma], [sigma, z]])
    gamma = np.block([[sigma, z], [z, sigma]])
    PH = np.block([[z, np.eye(m)], [np.eye(m), z]])
    a = gH @ JT
    b = gamma @ PH @ JT
    return {
        "square": float(np.max(np.abs(JT @ JT + np.eye(2 * m)))),
        "neutral": float(np.max(np.abs(a + a.T))),
        "gamma_form": float(np.max(np.abs(b + b.T))),
    }


def reverse_transfer(JT: Jet, sigma: Jet) -> tuple[Jet, Jet, Jet]:
    """``A = pr_H J``, ``flat_b = flat_gamma S' pr_V J`` and ``#_w = pr_H J S #_gamma``."""
    m = sigma.shape[0]
    r = min(JT.order, sigma.order)
    JT, sigma = JT.truncate(r), sigma.truncate(r)
    A = JT[:m, :m]
    b = jeinsum("ik,kj->ij", sigma, JT[m:, :m])
    w = jeinsum("ik,kj->ij", JT[:m, m:], jinv(sigma))
    return A, w, b


# --------------------------------------------------------------------------
# horizontal calculus


class HorizontalCalculus:
    """Brackets and ``d' = d|_H`` on horizontal tensors, computed with the frame ``X_i``."""

    def __init__(self, local: LocalFrame):
        self.local = local
        self.m = local.m
        self.c = local.structure[: self.m, : self.m, : self.m]

    def dh(self, f: Jet) -> Jet:
        """``X_a f`` on a new last axis."""
        return self.local.d(f)[..., : self.m]

    def _c(self, order: int) -> Jet:
        return self.c.truncate(min(order, self.c.order))

    def bracket(self, u: Jet, v: Jet) -> Jet:
        """``pr_H [U, V]`` for horizontal fields."""
        du, dv = self.dh(u), self.dh(v)
        r = min(du.order, dv.order)
        u1, v1 = u.truncate(r), v.truncate(r)
        return (jeinsum("ia,a->i", dv, u1) - jeinsum("ia,a->i", du, v1)
                + jeinsum("iab,a,b->i", self._c(r), u1, v1))

    def d0(self, f: Jet) -> Jet:
        return self.dh(f)

    def d1(self, alpha: Jet) -> Jet:
        """``d'alpha[a, b] = X_a alpha_b - X_b alpha_a - alpha(pr_H[X_a, X_b])``."""
        D = self.dh(alpha)  # [b, a]
        return D.T - D - jeinsum("k,kab->ab", alpha.truncate(D.order), self._c(D.order))

    def d2(self, beta: Jet) -> Jet:
        """Exterior derivative of a horizontal 2-form on horizontal frame triples."""
        D = self.dh(beta)  # [x, y, z] = X_z beta_xy
        cb = jeinsum("kab,kc->abc", self._c(D.order), beta.truncate(D.order))  # beta([X_a, X_b], X_c)
        return (jeinsum("bca->abc", D) - jeinsum("acb->abc", D) + D
                - cb + jeinsum("acb->abc", cb) - jeinsum("bca->abc", cb))

    def lie_form(self, u: Jet, beta: Jet) -> Jet:
        """Horizontal part of ``L_U beta`` for horizontal ``U`` and ``beta`` in ann V."""
        d1 = self.d1(beta)
        return jeinsum("a,ab->b", u.truncate(d1.order), d1) + self.d0(jeinsum("a,a->", u, beta))

    def pair_bracket(self, p: Jet, q: Jet) -> Jet:
        """Horizontal metric bracket of two pair fields."""
        m = self.m
        X, a, Y, b = p[:m], p[m:], q[:m], q[m:]
        vec = self.bracket(X, Y)
        da, db = self.d1(a), self.d1(b)
        r = da.order
        pair = jeinsum("a,a->", a, Y) - jeinsum("a,a->", b, X)
        form = (jeinsum("x,xy->y", X.truncate(r), db) - jeinsum("x,xy->y", Y.truncate(r), da)
                - 0.5 * self.d0(pair))
        return Jet.stack([vec, form.truncate(vec.order)]).reshape(2 * m)

    def anchor_derivative(self, p: Jet, f: Jet) -> Jet:
        """``(rho p) f``."""
        return jeinsum("a,a->", p[: self.m].truncate(f.order - 1), self.dh(f))

    def partial(self, f: Jet) -> Jet:
        """``df`` seen in ``H + H*`` through ``(rho e) f = 2 g(partial f, e)``."""
        d = self.d0(f)
        return Jet.stack([Jet.zeros((self.m,), f.nvars, d.order), d]).reshape(2 * self.m)


def pair_metric(p: Jet, q: Jet) -> Jet:
    m = p.shape[0] // 2
    return 0.5 * (jeinsum("a,a->", p[m:], q[:m]) + jeinsum("a,a->", q[m:], p[:m]))


def metric_algebroid_residuals(local: LocalFrame, e: Jet, e1: Jet, e2: Jet, f: Jet) -> dict:
    """Both sides of the metric-algebroid axiom and of its Leibniz consequence at the point."""
    hc = HorizontalCalculus(local)
    lhs = hc.anchor_derivative(e, pair_metric(e1, e2))

    def term(a, b):
        return hc.pair_bracket(e, a) + hc.partial(pair_metric(e, a))

    rhs = pair_metric(term(e1, e2), e2) + pair_metric(e1, term(e2, e1))
    fe2 = jeinsum(",a->a", f, e2)
    left = hc.pair_bracket(e1, fe2)
    right = (jeinsum(",a->a", f, hc.pair_bracket(e1, e2)) + jeinsum(",a->a", hc.anchor_derivative(e1, f), e2)
             - jeinsum(",a->a", pair_metric(e1, e2), hc.partial(f)))
    return {"metric": float(abs(lhs.value - rhs.value)),
            "leibniz": float(np.max(np.abs(left.value - right.value)))}


def horizontal_nijenhuis_table(J: Jet, local: LocalFrame) -> np.ndarray:
    """``N[k, p, q]``: component ``k`` of the horizontal Nijenhuis torsion on frame pairs ``e_p, e_q``."""
    hc = HorizontalCalculus(local)
    n = J.shape[0]
    eye = np.eye(n)
    cols = [jeinsum("ab,b->a", J, eye[p]) for p in range(n)]
    Jr = J.truncate(J.order - 1)
    JJ = jeinsum("ab,bc->ac", Jr, Jr)
    N = np.zeros((n, n, n))
    for p in range(n):
        ep = Jet.constant(eye[p], J.nvars, J.order)
        for q in range(p + 1, n):
            eq = Jet.constant(eye[q], J.nvars, J.order)
            v = (hc.pair_bracket(cols[p], cols[q])
                 - jeinsum("ab,b->a", Jr, hc.pair_bracket(cols[p], eq))
                 - jeinsum("ab,b->a", Jr, hc.pair_bracket(ep, cols[q]))
                 + jeinsum("ab,b->a", JJ, hc.pair_bracket(ep, eq))).value
            N[:, p, q] = v
            N[:, q, p] = -v
    return N


def horizontal_nijenhuis(J: Jet, local: LocalFrame, p, q) -> np.ndarray:
    return np.einsum("kpq,p,q->k", horizontal_nijenhuis_table(J, local), p, q)


def horizontal_nijenhuis_tangent(J: Jet, gs: GeneralizedSasakiMetric, z1, z2) -> np.ndarray:
    """Horizontal Nijenhuis torsion of the transferred structure on tangent vectors of the total space."""
    m = gs.m
    s = gs.sigma.value
    i = np.block([[np.eye(m), np.zeros((m, m))], [np.zeros((m, m)), np.linalg.inv(s)]])
    iinv = np.linalg.inv(i)
    return i @ horizontal_nijenhuis(J, gs.local, iinv @ z1, iinv @ z2)


# --------------------------------------------------------------------------
# integrability tensors


def schouten_ww(w: Jet, hc: HorizontalCalculus) -> np.ndarray:
    """``[w, w](dx^i, dx^j, dx^k) = sum_cyc w^{il} X_l w^{jk}``.

    The normalization is the one under which the bivector part of the
    horizontal Nijenhuis torsion equals ``[w, w]``; only its vanishing matters
    for integrability.
    """
    Dw = hc.dh(w).value  # [j, k, l]
    t = np.einsum("il,jkl->ijk", w.value, Dw)
    return t + t.transpose(1, 2, 0) + t.transpose(2, 0, 1)


def schouten_concomitant(w: Jet, A: Jet, local: LocalFrame) -> np.ndarray:
    """``pr_H R_{(w, A)}(X_k, dx^l)`` as ``R[i, k, l]``.

    ``R(X, alpha) = #_w[L_X(alpha o A) - L_{AX} alpha] - (L_{#_w alpha} A)(X)``.
    """
    hc = HorizontalCalculus(local)
    m = local.m
    n = w.nvars
    order = min(w.order, A.order)
    eye = np.eye(m)
    out = np.zeros((m, m, m))
    for k in range(m):
        X = Jet.constant(eye[k], n, order)
        AX = jeinsum("ij,j->i", A, X)
        for l in range(m):
            alpha = Jet.constant(eye[l], n, order)
            aA = jeinsum("i,ij->j", alpha, A)
            form = hc.lie_form(X, aA) - hc.lie_form(AX, alpha)
            first = jeinsum("ij,j->i", w.truncate(form.order), form)
            V = jeinsum("ij,j->i", w, alpha)
            br = hc.bracket(V, X)
            LA = hc.bracket(V, AX) - jeinsum("ij,j->i", A.truncate(br.order), br)
            out[:, k, l] = (first - LA).value
    return out


def _nijenhuis_A(A: Jet, hc: HorizontalCalculus) -> np.ndarray:
    """``pr_H N_A(X_a, X_b)`` as ``[i, a, b]``."""
    m = hc.m
    eye = np.eye(m)
    cols = [jeinsum("ij,j->i", A, eye[a]) for a in range(m)]
    Ar = A.truncate(A.order - 1)
    out = np.zeros((m, m, m))
    for a in range(m):
        ea = Jet.constant(eye[a], A.nvars, A.order)
        for b in range(m):
            eb = Jet.constant(eye[b], A.nvars, A.order)
            v = (hc.bracket(cols[a], cols[b]) - jeinsum("ij,j->i", Ar, hc.bracket(cols[a], eb))
                 - jeinsum("ij,j->i", Ar, hc.bracket(ea, cols[b]))
                 + jeinsum("ij,jk,k->i", Ar, Ar, hc.bracket(ea, eb)))
            out[:, a, b] = v.value
    return out


@dataclass
class IntegrabilityReport:
    """The four horizontal integrability tensors and their max-norms."""

    tensors: dict
    tolerance: float = 1e-9
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def residuals(self) -> dict:
        return {k: float(np.max(np.abs(v), initial=0.0)) for k, v in self.tensors.items()}

    @property
    def integrable(self) -> bool:
        return all(v <= self.tolerance for v in self.residuals.values())

    @property
    def failing(self) -> list:
        return [k for k, v in self.residuals.items() if v > self.tolerance]


def integrability_tensors(J: Jet, local: LocalFrame, tolerance: float = 1e-9) -> IntegrabilityReport:
    """``pr [w, w]``, ``pr_H R_{(w, A)}``, ``pr_H{N_A - #_w[i(X')i(X)d'b]}`` and the ``d'b_A`` defect."""
    if J.order < 1:
        raise ConstructionError("integrability needs first derivatives of the structure")
    hc = HorizontalCalculus(local)
    A, w, b = split_blocks(J)
    db = hc.d2(b).value  # [a, b, c]
    bA = jeinsum("ka,kb->ab", A, b)  # b(AX, Y)
    dbA = hc.d2(bA).value
    Av = A.value
    cyc = (np.einsum("ka,kbc->abc", Av, db) + np.einsum("kb,kca->abc", Av, db)
           + np.einsum("kc,kab->abc", Av, db))
    tensors = {
        "schouten_ww": schouten_ww(w, hc),
        "concomitant": schouten_concomitant(w, A, local),
        # i(X')i(X)d'b = d'b(X', X, .)
        "nijenhuis": _nijenhuis_A(A, hc) - np.einsum("ic,bac->iab", w.value, db),
        "db_A": dbA - cyc,
    }
    return IntegrabilityReport(tensors, tolerance)


def nijenhuis_projections(J: Jet, local: LocalFrame) -> dict:
    """Projections of the horizontal Nijenhuis torsion paired with the four tensors.

    Returns ``{name: (from_nijenhuis, from_tensors)}``.
    """
    m = local.m
    N = horizontal_nijenhuis_table(J, local)
    T = integrability_tensors(J, local).tensors
    h, v = slice(0, m), slice(m, 2 * m)
    return {
        # <gamma, pr N((0, alpha), (0, beta))> = [w, w](alpha, beta, gamma)
        "schouten_ww": (N[h, v, v].transpose(1, 2, 0), T["schouten_ww"]),
        "concomitant": (N[h, h, v], T["concomitant"]),
        "nijenhuis": (N[h, h, h], T["nijenhuis"]),
        "db_A": (N[v, h, h].transpose(1, 2, 0), T["db_A"]),
    }


# --------------------------------------------------------------------------
# velocity dependent complex structures of the form j + (alpha_i y^i) f


def vd_complex_conditions(j: Jet, f: Jet, local: LocalFrame) -> dict:
    """The three conditions for ``J = j + phi f`` written with the horizontal bracket.

    ``j`` and ``f`` are the horizontal lifts, already evaluated as jets.
    """
    hc = HorizontalCalculus(local)
    m = local.m
    eye = np.eye(m)
    jr, fr = j.truncate(j.order - 1), f.truncate(f.order - 1)

    def apply(T, e):
        return jeinsum("ij,j->i", T, e)

    mixed = np.zeros((m, m, m))
    for a in range(m):
        ea = Jet.constant(eye[a], j.nvars, j.order)
        for b in range(m):
            eb = Jet.constant(eye[b], j.nvars, j.order)
            v = (hc.bracket(apply(j, ea), apply(f, eb)) + hc.bracket(apply(f, ea), apply(j, eb))
                 - apply(jr, hc.bracket(apply(f, ea), eb) + hc.bracket(ea, apply(f, eb)))
                 - apply(fr, hc.bracket(apply(j, ea), eb) + hc.bracket(ea, apply(j, eb))))
            mixed[:, a, b] = v.value
    return {"nijenhuis_j": _nijenhuis_A(j, hc), "nijenhuis_f": _nijenhuis_A(f, hc), "mixed": mixed}


# --------------------------------------------------------------------------
# generalized Sasaki-Kaehler structures


@dataclass
class SasakiKahlerVerdict:
    verdict: str
    points: list
    failing: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)

    @property
    def positive(self) -> bool:
        return self.verdict == "Sasaki-Kahler"


def sasaki_kahler_check(sigma, psi, connection: NonlinearConnection, J: VdgAlmostComplex, points,
                        tolerance: float = 1e-9, compat_tol: float = 1e-12) -> SasakiKahlerVerdict:
    """Runs the integrability tensors for ``J`` and ``J' = H J`` at every point."""
    rows = []
    failing = {}
    for p in points:
        p = np.asarray(p, dtype=float)
        gs = sasaki_metric(sigma, psi, connection, p, order=2)
        Jj = J.jet(p, 2)
        H = gs.gen.H
        r = min(H.order, Jj.order)
        H, Jj = H.truncate(r), Jj.truncate(r)
        comm = jeinsum("ab,bc->ac", H, Jj) - jeinsum("ab,bc->ac", Jj, H)
        c = float(np.max(np.abs(comm.value)))
        if c > compat_tol:
            return SasakiKahlerVerdict("not Hermitian", [p.tolist()], {"compatibility": c})
        Jc = jeinsum("ab,bc->ac", H, Jj)
        row = {}
        for name, S in (("J", Jj), ("J'", Jc)):
            rep = integrability_tensors(S, gs.local, tolerance)
            row[name] = rep.residuals
            if not rep.integrable:
                failing.setdefault(name, sorted(set(failing.get(name, [])) | set(rep.failing)))
        rows.append(row)
    verdict = "Sasaki-Kahler" if not failing else "not integrable"
    return SasakiKahlerVerdict(verdict, [np.asarray(p).tolist() for p in points], failing, rows)
