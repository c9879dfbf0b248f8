"""Torsion, curvature and Ricci tensors of adapted-frame connections.

Generic routes work for any :class:`ConnectionOperator`.  The closed forms for
the double metric Cartan connection are written out separately so that the two
can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import ConstructionError
from .connections import (
    ConnectionOperator,
    canonical_connections,
    double_metric_cartan,
    torsion_table,
)
from .frames import LocalFrame
from .genmetric import GeneralizedSasakiMetric
from .jets import Jet, jeinsum


class SignatureError(ConstructionError):
    """Gram-Schmidt needs a definite form."""


# --------------------------------------------------------------------------
# generic torsion and curvature


def torsion_tensor(conn: ConnectionOperator) -> Jet:
    """``T[a, c, b] = (nabla_{E_c} E_b - nabla_{E_b} E_c - [E_c, E_b])^a``."""
    return torsion_table(conn)


def torsion(conn: ConnectionOperator, z1, z2) -> np.ndarray:
    return np.einsum("acb,c,b->a", torsion_table(conn).value, z1, z2)


def curvature_table(A: Jet, local: LocalFrame) -> Jet:
    """Curvature of a connection on a rank-``p`` bundle, ``A[i, c, j]`` with ``c`` a frame direction.

    Returns ``R[e, b, c, d] = (R(E_c, E_d) s_b)^e``.
    """
    dA = local.d(A)
    c = local.structure
    r = min(dA.order, c.order)
    A = A.truncate(r)
    return (jeinsum("edbc->ebcd", dA.truncate(r)) - jeinsum("ecbd->ebcd", dA.truncate(r))
            + jeinsum("eca,adb->ebcd", A, A) - jeinsum("eda,acb->ebcd", A, A)
            - jeinsum("acd,eab->ebcd", c.truncate(r), A))


@dataclass
class CurvatureTensor:
    """``R[e, b, c, d] = (R(E_c, E_d) E_b)^e`` at a point."""

    table: Jet
    provenance: str = "custom"

    @property
    def coefficients(self) -> np.ndarray:
        return self.table.value

    def __call__(self, z1, z2, z3) -> np.ndarray:
        return np.einsum("ebcd,c,d,b->e", self.coefficients, z1, z2, z3)

    def antisymmetry_residual(self) -> float:
        R = self.coefficients
        return float(np.max(np.abs(R + R.transpose(0, 1, 3, 2))))

    def bianchi_residual(self) -> float:
        """First Bianchi identity; meaningful for torsion-free connections."""
        R = self.coefficients
        cyc = R + R.transpose(0, 3, 1, 2) + R.transpose(0, 2, 3, 1)
        return float(np.max(np.abs(cyc)))


def curvature_tensor(conn: ConnectionOperator) -> CurvatureTensor:
    return CurvatureTensor(curvature_table(conn.gamma, conn.local), conn.provenance)


def curvature(conn: ConnectionOperator, z1, z2, z3) -> np.ndarray:
    return curvature_tensor(conn)(z1, z2, z3)


@dataclass
class RicciTensor:
    """``matrix[b, d] = Ric(E_b, E_d) = trace(W -> R(W, E_d) E_b)``."""

    matrix: np.ndarray
    point: np.ndarray
    basis: dict = field(default_factory=dict)

    @property
    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)

    def blocks(self) -> dict:
        m = self.matrix.shape[0] // 2
        R = self.matrix
        return {"hh": R[:m, :m], "hv": R[:m, m:], "vh": R[m:, :m], "vv": R[m:, m:]}


def ricci_trace(R: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """Trace of ``W -> R(W, Z) Z'`` over the columns of ``basis`` and their dual coframe."""
    if basis is None:
        return np.einsum("abad->bd", R)
    dual = np.linalg.inv(basis)
    return np.einsum("ie,ebcd,ci->bd", dual, R, basis)


def ricci(conn: ConnectionOperator, coordinate: bool = True) -> RicciTensor:
    """Ricci tensor by direct trace, in the coordinate frame by default."""
    R = curvature_tensor(conn).coefficients
    basis = conn.local.Finv.value if coordinate else None
    return RicciTensor(ricci_trace(R, basis), conn.local.point,
                       {"route": "coordinate-trace" if coordinate else "adapted-trace"})


# --------------------------------------------------------------------------
# closed forms for the double metric Cartan connection


def _pieces(gs: GeneralizedSasakiMetric):
    can = canonical_connections(gs)
    return can["bott"], can["cartan_data"].Psi, can["cartan"]


def torsion_closed_form(gs: GeneralizedSasakiMetric) -> np.ndarray:
    """Torsion of the double metric Cartan connection from its three block formulas.

    ``T(X, X') = -pr_V[X, X'] + S[nabla_X(QX') - nabla_{X'}(QX) - Q pr_H[X, X']]``,
    ``T(Y, Y') = S[Psi(Y, S'Y') - Psi(Y', S'Y)]`` on frame fields and
    ``T(X, Y) = -nabla_X Y - Psi(Y, X) + S[nabla_X(S'Y) - (nabla_Y Q)X - Psi(Y, QX) + Q Psi(Y, X)]``
    with ``nabla`` the Vranceanu-Bott connection.
    """
    m, n = gs.m, gs.n
    bott, Psi, _ = _pieces(gs)
    B = bott.gamma.value
    P = Psi.value
    c = gs.local.structure.value
    Qj = gs.Q
    Q = Qj.value
    dQ = gs.local.d(Qj).value  # [i, j, c] = E_c Q_ij
    h, v = slice(0, m), slice(m, n)
    # nabla_{X_c}(Q X_b)^i = E_c Q_ib + B[i, c, k] Q_kb
    nqx = dQ[:, :, :m].transpose(0, 2, 1) + np.einsum("ick,kb->icb", B[h, h, h], Q)
    # (nabla_{E_c} Q)[i, j]
    nabQ = dQ + np.einsum("ick,kj->ijc", B[h, :, h], Q) - np.einsum("ik,kcj->ijc", Q, B[h, :, h])
    psi_yx = P[h, v, h]  # Psi(Y_k, X_j)^i as [i, k, j]
    T = np.zeros((n, n, n))
    T[v, h, h] = -c[v, h, h] + nqx - nqx.transpose(0, 2, 1) - np.einsum("ik,kcb->icb", Q, c[h, h, h])
    T[v, v, v] = psi_yx - psi_yx.transpose(0, 2, 1)
    hv = np.zeros((n, m, m))  # [a, c, b] for T(X_c, Y_b)
    hv[v] += -B[v, h, v]
    hv[h] += -psi_yx.transpose(0, 2, 1)
    hv[v] += (B[h, h, h] - nabQ[:, :, m:]
              - np.einsum("ibk,kc->icb", psi_yx, Q) + np.einsum("ik,kbc->icb", Q, psi_yx))
    T[:, h, v] = hv
    T[:, v, h] = -hv.transpose(0, 2, 1)
    return T


def vertical_torsion_general(gs: GeneralizedSasakiMetric, Y: Jet, Yp: Jet) -> dict:
    """Torsion on two arbitrary vertical fields (adapted-component jets), two ways.

    The closed route is ``S[nabla_Y(S'Y') - nabla_{Y'}(S'Y)] - [Y, Y'] + S[Psi(Y, S'Y') - Psi(Y', S'Y)]``.
    """
    m = gs.m
    dmc = double_metric_cartan(gs)
    local = gs.local
    bott, Psi, _ = _pieces(gs)
    r = min(Y.order, Yp.order, dmc.order) - 1
    Y, Yp = Y.truncate(r + 1), Yp.truncate(r + 1)
    generic = (dmc.covariant(Y, Yp) - dmc.covariant(Yp, Y)).value - local.bracket(Y, Yp).value

    def shifted(w):  # S' w as a full adapted vector field
        z = Jet.zeros((m,), w.nvars, w.order)
        return Jet.stack([w[m:], z]).reshape(2 * m)

    a = bott.covariant(Y, shifted(Yp)).value - bott.covariant(Yp, shifted(Y)).value
    P = Psi.value
    psi = np.einsum("acb,c,b->a", P, Y.value, shifted(Yp).value) - np.einsum(
        "acb,c,b->a", P, Yp.value, shifted(Y).value)
    S = np.zeros((2 * m, 2 * m))
    S[m:, :m] = np.eye(m)
    closed = S @ a - local.bracket(Y, Yp).value + S @ psi
    return {"generic": generic, "closed": closed}


def curvature_dmc_closed_form(gs: GeneralizedSasakiMetric) -> np.ndarray:
    """``R_D X = R_C X + S[R_C(QX) - Q R_C X]`` and ``R_D(SX) = S R_C X`` as a table."""
    m, n = gs.m, gs.n
    _, _, cartan = _pieces(gs)
    RC = curvature_tensor(cartan).coefficients[:m, :m]  # horizontal on horizontal
    Q = gs.Q.value
    out = np.zeros((n, n, n, n))
    out[:m, :m] = RC
    out[m:, :m] = np.einsum("ekcd,kb->ebcd", RC, Q) - np.einsum("ek,kbcd->ebcd", Q, RC)
    out[m:, m:] = RC
    return out


def curvature_dmc(gs: GeneralizedSasakiMetric, z1, z2, z3) -> np.ndarray:
    return np.einsum("ebcd,c,d,b->e", curvature_dmc_closed_form(gs), z1, z2, z3)


def curvature_cartan_from_bott(gs: GeneralizedSasakiMetric) -> np.ndarray:
    """Full relation between the Cartan and Vranceanu-Bott curvatures, on frame fields.

    ``R_C(Z, Z')Z'' = R_D(Z, Z')Z'' + nabla_Z(Psi(Z', Z'')) - nabla_{Z'}(Psi(Z, Z''))
    + Psi(Z, nabla_{Z'}Z'') - Psi(Z', nabla_Z Z'') - Psi([Z, Z'], Z'')
    + Psi(Z, Psi(Z', Z'')) - Psi(Z', Psi(Z, Z''))``.
    """
    bott, Psi, _ = _pieces(gs)
    local = gs.local
    RD = curvature_tensor(bott).coefficients
    B, P, c = bott.gamma.value, Psi.value, local.structure.value
    dP = local.d(Psi).value  # [a, d, b, c] = E_c Psi[a, d, b]
    # nabla_{E_c}(Psi(E_d, E_b))^e
    nP = dP.transpose(0, 2, 3, 1) + np.einsum("eck,kdb->ebcd", B, P)
    out = (RD + nP - nP.transpose(0, 1, 3, 2)
           + np.einsum("eck,kdb->ebcd", P, B) - np.einsum("edk,kcb->ebcd", P, B)
           - np.einsum("kcd,ekb->ebcd", c, P)
           + np.einsum("eck,kdb->ebcd", P, P) - np.einsum("edk,kcb->ebcd", P, P))
    return out


def curvature_cartan_cases(gs: GeneralizedSasakiMetric) -> dict:
    """Reduced case list of the Cartan/Bott curvature relation.

    Returns ``{case: (closed, generic)}`` restricted to the relevant index blocks.
    """
    m, n = gs.m, gs.n
    bott, Psi, cartan = _pieces(gs)
    local = gs.local
    RD = curvature_tensor(bott).coefficients
    RC = curvature_tensor(cartan).coefficients
    B, P, c = bott.gamma.value, Psi.value, local.structure.value
    dP = local.d(Psi).value
    h, v = slice(0, m), slice(m, n)
    cases = {}
    cases["vertical_argument"] = (RD[:, v], RC[:, v])
    # R_C(X, X')X'' = R_D(X, X')X'' - Psi(pr_V[X, X'], X'')
    hh = RD[:, h, h, h] - np.einsum("kcd,ekb->ebcd", c[v, h, h], P[:, v, h])
    cases["horizontal_pair"] = (hh, RC[:, h, h, h])
    # R_C(X, Y)X' = R_D(X, Y)X' + nabla_X(Psi(Y, X')) - Psi(Y, nabla_X X') - Psi(pr_V[X, Y], X')
    nP = dP[:, v, h, h].transpose(0, 2, 3, 1) + np.einsum("eck,kdb->ebcd", B[:, h, :], P[:, v, h])
    mixed = (RD[:, h, h, v] + nP - np.einsum("edk,kcb->ebcd", P[:, v, h], B[h, h, h])
             - np.einsum("kcd,ekb->ebcd", c[v, h, v], P[:, v, h]))
    cases["mixed"] = (mixed, RC[:, h, h, v])
    full = curvature_cartan_from_bott(gs)
    cases["vertical_pair"] = (full[:, h, v, v], RC[:, h, v, v])
    return cases


# --------------------------------------------------------------------------
# Ricci tensor of the double metric Cartan connection


def gram_schmidt(form: np.ndarray, what: str = "form") -> np.ndarray:
    """Columns orthonormal for a positive definite ``form``, built in index order."""
    w = np.linalg.eigvalsh(0.5 * (form + form.T))
    if np.min(np.abs(w)) < 1e-12 * max(1.0, np.max(np.abs(w))):
        raise ConstructionError(f"{what} is degenerate")
    if np.min(w) < 0:
        raise SignatureError(f"{what} is indefinite; only definite forms are supported")
    m = form.shape[0]
    basis = np.zeros((m, m))
    for i in range(m):
        u = np.eye(m)[:, i].copy()
        for j in range(i):
            u -= (basis[:, j] @ form @ u) * basis[:, j]
        basis[:, i] = u / np.sqrt(u @ form @ u)
    return basis


def ricci_dmc(gs: GeneralizedSasakiMetric) -> RicciTensor:
    """Ricci tensor from the closed-form curvature, traced over ``(E^beta_i, S E^sigma_i)``."""
    m, n = gs.m, gs.n
    beta = gs.gen.beta.value
    if np.linalg.matrix_rank(np.eye(m) - gs.Q.value @ gs.Q.value, tol=1e-10) < m:
        raise ConstructionError("beta is degenerate: rank(Id - Q^2) < m")
    sigma = gs.sigma.value
    Eb = gram_schmidt(beta, "beta")
    Es = gram_schmidt(sigma, "sigma")
    R = curvature_dmc_closed_form(gs)
    # eps_beta(R(E^beta_i, Z)Z')
    hor = np.einsum("ie,ebcd,ci->bd", np.linalg.inv(Eb), R[:m, :, :m], Eb)
    # (eps_sigma o S')(R(S E^sigma_i, Z)Z')
    ver = np.einsum("ie,ebcd,ci->bd", np.linalg.inv(Es), R[m:, :, m:], Es)
    return RicciTensor(hor + ver, gs.point, {"route": "ortho-trace", "beta": Eb, "sigma": Es})


def einstein_cartan_residual(ric: RicciTensor, gs: GeneralizedSasakiMetric, lam="fit"):
    """``max |Ric(Z, Z') + Ric(Z', Z) - 2 lambda G(Z, Z')|`` over frame pairs."""
    A = ric.matrix + ric.matrix.T
    G = gs.G.value
    if lam == "fit":
        lam = float(np.sum(A * G) / (2.0 * np.sum(G * G)))
    return float(np.max(np.abs(A - 2.0 * lam * G))), float(lam)
