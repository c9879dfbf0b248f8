"""Linear connections of the tangent manifold as adapted-frame coefficient jets.

A connection is stored as ``gamma[a, c, b] = (nabla_{E_c} E_b)^a`` where
``E = (X_1..X_m, d/dy^1..d/dy^m)``.  Horizontal indices are ``0..m-1`` and
vertical ones ``m..2m-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import ConstructionError
from .frames import LocalFrame
from .genmetric import GeneralizedSasakiMetric
from .jets import Jet, jeinsum, jinv

PROVENANCES = (
    "levi-civita",
    "levi-civita-G",
    "vranceanu-bott",
    "cartan",
    "double-metric-cartan",
    "paired",
    "custom",
)


@dataclass
class ConnectionOperator:
    """Connection coefficients at one point plus the frame they live in."""

    gamma: Jet
    local: LocalFrame
    provenance: str = "custom"
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        n = self.local.n
        if self.gamma.shape != (n, n, n):
            raise ValueError(f"coefficient table must have shape {(n, n, n)}")

    @property
    def n(self) -> int:
        return self.local.n

    @property
    def m(self) -> int:
        return self.local.m

    @property
    def coefficients(self) -> np.ndarray:
        return self.gamma.value

    @property
    def order(self) -> int:
        return self.gamma.order

    def covariant(self, z, w: Jet) -> Jet:
        """``nabla_Z W`` for adapted-component jets (``z`` may be a plain vector)."""
        dw = self.local.d(w)
        r = min(dw.order, self.gamma.order)
        inner = dw.truncate(r) + jeinsum("acb,b->ac", self.gamma.truncate(r), w.truncate(r))
        if isinstance(z, Jet):
            return jeinsum("ac,c->a", inner, z.truncate(min(z.order, r)))
        return jeinsum("ac,c->a", inner, np.asarray(z, dtype=float))

    def apply(self, z, w) -> np.ndarray:
        """``Gamma(Z, W)`` at the point; for frame fields this is the whole derivative."""
        return np.einsum("acb,c,b->a", self.coefficients, z, w)

    def tensor_derivative(self, T: Jet, variance: str) -> Jet:
        """Covariant derivative of a tensor jet, direction index appended last.

        ``variance`` holds ``u`` (upper) or ``d`` (lower) per tensor axis.
        """
        if len(variance) != T.ndim:
            raise ValueError("variance string must match tensor rank")
        dT = self.local.d(T)
        r = min(dT.order, self.gamma.order)
        out = dT.truncate(r)
        g = self.gamma.truncate(r)
        Tr = T.truncate(r)
        letters = "ABCDEFGH"[: T.ndim]
        for k, kind in enumerate(variance):
            src = letters[:k] + "Y" + letters[k + 1:]
            if kind == "u":
                out = out + jeinsum(f"{letters[k]}ZY,{src}->{letters}Z", g, Tr)
            else:
                out = out - jeinsum(f"YZ{letters[k]},{src}->{letters}Z", g, Tr)
        return out

    def compatibility_residual(self, metric: Jet, mask=None) -> float:
        """``max |nabla metric|``, optionally restricted to ``dg[mask]``."""
        dg = self.tensor_derivative(metric, "dd").value
        if mask is not None:
            dg = dg[mask]
        return float(np.max(np.abs(dg), initial=0.0))

    def commutator_residual(self, endo: Jet) -> float:
        """``max |nabla endo|``: vanishes iff the connection commutes with ``endo``."""
        return float(np.max(np.abs(self.tensor_derivative(endo, "ud").value)))

    def leibniz_residual(self, f: Jet, w: Jet, z) -> float:
        """``|nabla_Z(fW) - f nabla_Z W - (Zf) W|`` at the point."""
        lhs = self.covariant(z, jeinsum(",a->a", f, w)).value
        zf = self.local.d(f).value @ np.asarray(z, dtype=float)
        rhs = f.value * self.covariant(z, w).value + zf * w.value
        return float(np.max(np.abs(lhs - rhs)))

    def __sub__(self, other: "ConnectionOperator") -> np.ndarray:
        return self.coefficients - other.coefficients


def horizontal_mask(m: int) -> np.ndarray:
    return np.r_[np.ones(m, bool), np.zeros(m, bool)]


# --------------------------------------------------------------------------
# Levi-Civita through the Koszul formula in the adapted frame


def _koszul(dG: Jet, c: Jet, G: Jet) -> Jet:
    """``2 G(nabla_{E_a} E_b, E_c)`` arranged as ``[c, a, b]``.

    ``dG[x, y, z] = E_z G_xy``; ``c`` are the frame structure functions.
    """
    cG = jeinsum("dab,dc->cab", c, G)  # G([E_a, E_b], E_c)
    ea = jeinsum("bca->cab", dG)  # E_a G_bc
    eb = jeinsum("acb->cab", dG)  # E_b G_ac
    ec = jeinsum("abc->cab", dG)  # E_c G_ab
    return ea + eb - ec + cG - jeinsum("bac->cab", cG) - jeinsum("abc->cab", cG)


def levi_civita(metric: Jet, local: LocalFrame, provenance: str = "levi-civita") -> ConnectionOperator:
    """Torsion-free metric connection of an adapted-frame metric jet."""
    if abs(np.linalg.det(metric.value)) < 1e-14:
        raise ConstructionError(f"degenerate metric at point {np.round(local.point, 6).tolist()}")
    dG = local.d(metric)
    r = min(dG.order, local.structure.order)
    G = metric.truncate(r)
    lower = _koszul(dG.truncate(r), local.structure.truncate(r), G)
    gamma = 0.5 * jeinsum("ec,cab->eab", jinv(G), lower)
    return ConnectionOperator(gamma, local, provenance)


# --------------------------------------------------------------------------
# Vranceanu-Bott, Cartan data and Cartan connection


def vranceanu_bott(D: ConnectionOperator) -> ConnectionOperator:
    """Block projection of ``D`` completed by the Bott brackets on mixed pairs."""
    m, local = D.m, D.local
    h = horizontal_mask(m)
    v = ~h
    c = local.structure
    r = min(D.order, c.order)
    G = D.gamma.truncate(r).coeffs.copy()
    C = c.truncate(r).coeffs
    out = np.zeros_like(G)
    # nabla_X X' = pr_H D_X X' ; nabla_Y Y' = pr_V D_Y Y'
    out[np.ix_(h, h, h)] = G[np.ix_(h, h, h)]
    out[np.ix_(v, v, v)] = G[np.ix_(v, v, v)]
    # nabla_X Y = pr_V [X, Y] ; nabla_Y X = pr_H [Y, X]
    out[np.ix_(v, h, v)] = C[np.ix_(v, h, v)]
    out[np.ix_(h, v, h)] = C[np.ix_(h, v, h)]
    return ConnectionOperator(Jet(out, D.gamma.nvars, r), local, "vranceanu-bott")


@dataclass
class CartanData:
    """Cartan tensor ``C[k, i, j] = dg_ij/dy^k`` and ``Psi`` as a coefficient table.

    ``Psi[a, c, b] = Psi(E_c, E_b)^a`` is nonzero only for vertical ``c``,
    horizontal ``b`` and horizontal ``a``.
    """

    C: Jet
    Psi: Jet
    g: Jet

    def symmetry_residuals(self) -> dict:
        C = self.C.value
        return {
            "last_pair": float(np.max(np.abs(C - C.transpose(0, 2, 1)))),
            "first_pair": float(np.max(np.abs(C - C.transpose(1, 0, 2)))),
            "total": float(max(np.max(np.abs(C - C.transpose(p))) for p in
                               ((0, 2, 1), (1, 0, 2), (2, 1, 0), (1, 2, 0), (2, 0, 1)))),
        }

    def defining_residual(self) -> float:
        """``gamma(Psi(Y_k, X_i), X_l) - C(S'Y_k, X_i, X_l)/2``."""
        m = self.g.shape[0]
        P = self.Psi.value[:m, m:, :m]  # [j, k, i]
        lhs = np.einsum("jki,jl->kil", P, self.g.value)
        return float(np.max(np.abs(lhs - 0.5 * self.C.value)))


def cartan_data(g, local: LocalFrame) -> CartanData:
    """Cartan tensor of a horizontal metric ``g`` (a tensor or an ``(m, m)`` jet)."""
    m = local.m
    gj = g if isinstance(g, Jet) else g.jet(local.point, local.order)
    grad = gj.gradient()  # [i, j, mu]
    C = jeinsum("ijk->kij", grad[:, :, m:])
    ginv = jinv(gj.truncate(C.order))
    half = 0.5 * jeinsum("jl,kil->jki", ginv, C)
    coeffs = np.zeros((2 * m, 2 * m, 2 * m, half.coeffs.shape[-1]))
    coeffs[:m, m:, :m] = half.coeffs
    return CartanData(C, Jet(coeffs, gj.nvars, C.order), gj)


def cartan_connection(bott: ConnectionOperator, data: CartanData) -> ConnectionOperator:
    r = min(bott.order, data.Psi.order)
    return ConnectionOperator(bott.gamma.truncate(r) + data.Psi.truncate(r), bott.local, "cartan")


# --------------------------------------------------------------------------
# connections of a generalized Sasaki metric


def canonical_connections(gs: GeneralizedSasakiMetric) -> dict:
    """``D`` (Levi-Civita of gamma), ``nabla^D``, Cartan data and ``nabla^C``; cached on ``gs``."""
    if "canonical" not in gs.cache:
        D = levi_civita(gs.gamma, gs.local)
        bott = vranceanu_bott(D)
        data = cartan_data(gs.sigma, gs.local)
        gs.cache["canonical"] = {"D": D, "bott": bott, "cartan_data": data,
                                 "cartan": cartan_connection(bott, data)}
    return gs.cache["canonical"]


def _qderivative(conn_h: Jet, Q: Jet, local: LocalFrame) -> Jet:
    """``(D_{E_c} Q)[i, j]`` for a horizontal connection table ``conn_h[i, c, j]``."""
    dQ = local.d(Q)
    r = min(dQ.order, conn_h.order)
    Qr, g = Q.truncate(r), conn_h.truncate(r)
    return dQ.truncate(r) + jeinsum("ick,kj->ijc", g, Qr) - jeinsum("ik,kcj->ijc", Qr, g)


def double_metric_cartan(gs: GeneralizedSasakiMetric) -> ConnectionOperator:
    """The four block formulas of the double metric Cartan connection, literally.

    Built only from ``nabla^D``, ``Psi`` and ``nabla^D Q``.
    """
    if "dmc" in gs.cache:
        return gs.cache["dmc"]
    can = canonical_connections(gs)
    m, n = gs.m, gs.n
    bott = can["bott"].gamma
    Psi = can["cartan_data"].Psi
    r = min(bott.order, Psi.order, gs.Q.order - 1)
    B = bott.truncate(r).coeffs
    P = Psi.truncate(r).coeffs
    Q = gs.Q.truncate(r + 1)
    Qc = Q.truncate(r).coeffs
    nabQ = _qderivative(Jet(B[:m, :, :m], bott.nvars, r), Q, gs.local).coeffs  # [i, j, c]
    h, v = slice(0, m), slice(m, n)

    def jm(spec, *ops):
        return jeinsum(spec, *(Jet(o, bott.nvars, r) for o in ops)).coeffs

    out = np.zeros((n, n, n, B.shape[-1]))
    # D_X X' = nabla^D_X X' + S((nabla^D_X Q) X')
    out[h, h, h] = B[h, h, h]
    out[v, h, h] = nabQ[:, :, :m].transpose(0, 2, 1, 3)
    # D_X Y = S nabla^D_X (S'Y)
    out[v, h, v] = B[h, h, h]
    # D_Y X = nabla^D_Y X + Psi(Y, X) + S[(nabla^D_Y Q) X + Psi(Y, QX) - Q Psi(Y, X)]
    psi_yx = P[h, v, h]  # [i, c, j]
    out[h, v, h] = B[h, v, h] + psi_yx
    out[v, v, h] = (nabQ[:, :, m:].transpose(0, 2, 1, 3) + jm("ick,kj->icj", psi_yx, Qc)
                    - jm("ik,kcj->icj", Qc, psi_yx))
    # D_Y Y' = S[nabla^D_Y (S'Y') + Psi(Y, S'Y')]
    out[v, v, v] = B[h, v, h] + psi_yx
    dmc = ConnectionOperator(Jet(out, bott.nvars, r), gs.local, "double-metric-cartan")
    gs.cache["dmc"] = dmc
    return dmc


def paired_connection_transfer(gs: GeneralizedSasakiMetric, d0: Jet, lam: Jet | None = None,
                               tol: float = 1e-10) -> ConnectionOperator:
    """Transfer of the double metric connection of a pair ``D+- = D0 +- lambda``.

    ``d0[i, c, j]`` and ``lam[i, c, j]`` give ``D0_{E_c} X_j`` and
    ``lambda_{E_c} X_j`` on horizontal vectors.  ``Q`` is differentiated by ``D0``.
    """
    m, n = gs.m, gs.n
    if lam is None:
        lam = Jet.zeros(d0.shape, d0.nvars, d0.order)
    s = gs.sigma.value
    sl = np.einsum("ki,kcj->icj", s, lam.value)
    if np.max(np.abs(sl + sl.transpose(2, 1, 0))) > tol:
        raise ConstructionError("lambda is not sigma-antisymmetric")
    r = min(d0.order, lam.order, gs.Q.order - 1)
    d0, lam = d0.truncate(r), lam.truncate(r)
    Q = gs.Q.truncate(r + 1)
    Qr = Q.truncate(r)
    DQ = jeinsum("ijc->icj", _qderivative(d0, Q, gs.local))
    lamQ = jeinsum("ick,kj->icj", lam, Qr)
    Qlam = jeinsum("ik,kcj->icj", Qr, lam)
    QlamQ = jeinsum("ik,kcl,lj->icj", Qr, lam, Qr)
    h, v = slice(0, m), slice(m, n)
    out = np.zeros((n, n, n, d0.coeffs.shape[-1]))
    # D(SX) = S D0 X + (I - SQ) lambda X
    out[h, :, v] = lam.coeffs
    out[v, :, v] = (d0 - Qlam).coeffs
    # D X = D0 X + lambda(QX) + S[(D0 Q) X + lambda X - Q lambda(QX)]
    out[h, :, h] = (d0 + lamQ).coeffs
    out[v, :, h] = (DQ + lam - QlamQ).coeffs
    conn = ConnectionOperator(Jet(out, d0.nvars, r), gs.local, "paired")
    conn.extra.update(d0=d0, lam=lam)
    return conn


def cartan_horizontal_table(gs: GeneralizedSasakiMetric) -> Jet:
    """``nabla^C`` restricted to horizontal arguments, as ``[i, c, j]``."""
    m = gs.m
    return canonical_connections(gs)["cartan"].gamma[:m, :, :m]


def torsion_table(conn: ConnectionOperator) -> Jet:
    """``T[a, c, b] = T(E_c, E_b)^a`` (order one below the frame)."""
    c = conn.local.structure
    r = min(conn.order, c.order)
    g = conn.gamma.truncate(r)
    return g - g.transpose(0, 2, 1) - c.truncate(r)


def levi_civita_of_G_via_cartan(gs: GeneralizedSasakiMetric) -> ConnectionOperator:
    """``D^G = D^C - T/2 + Xi/2`` with ``G(Xi(Z, Z'), Z'') = G(Z', T(Z, Z'')) + G(Z, T(Z', Z''))``."""
    dmc = double_metric_cartan(gs)
    T = torsion_table(dmc)
    r = T.order
    G = gs.G.truncate(r)
    if abs(np.linalg.det(G.value)) < 1e-14:
        raise ConstructionError("degenerate generalized Sasaki metric")
    rhs = jeinsum("ba,acf->fcb", G, T) + jeinsum("ca,abf->fcb", G, T)  # [f, c, b]
    Xi = jeinsum("ef,fcb->ecb", jinv(G), rhs)
    gamma = dmc.gamma.truncate(r) - 0.5 * T + 0.5 * Xi
    return ConnectionOperator(gamma, gs.local, "levi-civita-G")


def levi_civita_of_G(gs: GeneralizedSasakiMetric) -> ConnectionOperator:
    """Direct Koszul route for the generalized Sasaki metric."""
    return levi_civita(gs.G, gs.local, "levi-civita-G")
