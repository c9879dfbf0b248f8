"""Generalized metrics on the pulled-back big tangent bundle and their
transfer to the tangent manifold (generalized Sasaki metrics).

Conventions.  ``sigma`` and ``psi`` are component matrices ``sigma_ij``,
``psi_ij``; ``flat_tau X = tau(X, .)``.  Then ``Q = sigma^{-1} psi`` as a matrix
(the coordinate form of ``Q = -sharp_sigma flat_psi``), ``beta = sigma (I - Q^2)``
and on pairs ``(X, alpha)``::

    H = [[Q, sigma^{-1}], [beta, Q^T]]

The identification ``i`` sends ``(X, alpha)`` to ``X + S sharp_sigma alpha``, so
in adapted components it is ``diag(I, sigma^{-1})``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import ConstructionError, NonlinearConnection, VelocityTensor
from .frames import (
    LocalFrame,
    horizontal_projector,
    paracomplex_matrix,
    s_prime_matrix,
    tangent_structure_matrix,
    vertical_projector,
)
from .jets import Jet, jblock, jeinsum, jinv


def _mm(a, b) -> Jet:
    return jeinsum("ij,jk->ik", a, b)


def neutral_metric(m: int) -> np.ndarray:
    """``g((X, a), (Y, b)) = (a(Y) + b(X)) / 2``."""
    z, e = np.zeros((m, m)), np.eye(m)
    return 0.5 * np.block([[z, e], [e, z]])


# --------------------------------------------------------------------------
# the (sigma, psi, Q, beta, H) dictionary


@dataclass
class GenMetricData:
    sigma: Jet
    psi: Jet
    sigma_inv: Jet
    Q: Jet
    beta: Jet
    H: Jet

    @property
    def m(self) -> int:
        return self.sigma.shape[0]

    def residuals(self) -> dict:
        """Algebraic identities of the dictionary, evaluated at the centre."""
        s, si, Q, b, H = (a.value for a in (self.sigma, self.sigma_inv, self.Q, self.beta, self.H))
        psi = self.psi.value
        m = self.m
        e = np.eye(m)
        g = neutral_metric(m)
        return {
            "q_definition": float(np.max(np.abs(psi.T + s.T @ Q))),
            "q_square": float(np.max(np.abs(Q @ Q + si @ b - e))),
            "q_sharp": float(np.max(np.abs(Q @ si + si @ Q.T))),
            "q_flat": float(np.max(np.abs(Q.T @ b + b @ Q))),
            "beta_from_q": float(np.max(np.abs(b - s @ (e - Q @ Q)))),
            "h_involution": float(np.max(np.abs(H @ H - np.eye(2 * m)))),
            "h_neutral_symmetry": float(np.max(np.abs(H.T @ g - g @ H))),
        }

    def beta_identity_residual(self, vectors) -> float:
        s, Q, b = self.sigma.value, self.Q.value, self.beta.value
        return max(float(abs(v @ b @ v - v @ s @ v - (Q @ v) @ s @ (Q @ v))) for v in vectors)

    def metric_matrix(self) -> np.ndarray:
        """Bilinear form ``G(u, v) = g(Hu, v)`` on pairs."""
        return self.H.value.T @ neutral_metric(self.m)

    def iota(self, sign: int) -> np.ndarray:
        """Columns ``iota_{+-}(e_i) = (e_i, flat_{psi +- sigma} e_i)``."""
        s, psi = self.sigma.value, self.psi.value
        return np.vstack([np.eye(self.m), (psi + sign * s).T])

    def eigenbundle_split(self, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
        """Bases of ``V+`` and ``V-`` from an eigen-decomposition of ``H``.

        Each basis is normalised so that its vector part is the identity,
        which is possible exactly when the covector bundle meets ``V+-`` trivially.
        """
        w, v = np.linalg.eig(self.H.value)
        out = []
        for sign in (1, -1):
            cols = np.real(v[:, np.abs(w - sign) < 1e-6])
            if cols.shape[1] != self.m:
                raise ConstructionError("H does not split into m-dimensional eigenbundles")
            top = cols[: self.m]
            if abs(np.linalg.det(top)) < tol:
                raise ConstructionError("covector bundle meets an eigenbundle of H (degenerate G on covectors)")
            out.append(cols @ np.linalg.inv(top))
        return out[0], out[1]

    def beta_degenerate(self, tol: float = 1e-10) -> bool:
        return abs(np.linalg.det(np.eye(self.m) - self.Q.value @ self.Q.value)) < tol


def _as_jet(a, point, order) -> Jet:
    if isinstance(a, Jet):
        return a.truncate(order) if a.order > order else a
    if hasattr(a, "jet"):
        return a.jet(point, order)
    return Jet.constant(np.asarray(a, dtype=float), len(point), order)


def build_gen_metric(sigma, psi, point=None, order: int = 0, tol: float = 1e-12) -> GenMetricData:
    """Dictionary from ``sigma`` (symmetric) and ``psi`` (antisymmetric).

    Inputs are jets or tensors evaluated at ``point`` to jet ``order``.
    """
    s = _as_jet(sigma, point, order)
    p = _as_jet(psi, point, order)
    sv, pv = s.value, p.value
    if np.max(np.abs(sv - sv.T)) > tol:
        raise ConstructionError("sigma is not symmetric")
    if np.max(np.abs(pv + pv.T)) > tol:
        raise ConstructionError("psi is not antisymmetric")
    if abs(np.linalg.det(sv)) < 1e-10:
        raise ConstructionError("degenerate sigma")
    si = jinv(s)
    Q = _mm(si, p)
    m = sv.shape[0]
    beta = _mm(s, Jet.constant(np.eye(m), s.nvars, s.order) - _mm(Q, Q))
    H = jblock([[Q, si], [beta, Q.T]])
    return GenMetricData(s, p, si, Q, beta, H)


def iota_pm(gen: GenMetricData, X: np.ndarray, sign: int) -> np.ndarray:
    """``iota_{+-}(X)`` as a pair ``(X, alpha)``."""
    return gen.iota(sign) @ X


def horizontal_iota(gen: GenMetricData, X: np.ndarray, sign: int) -> np.ndarray:
    """Transferred ``iota_{+-} X = X - SQX +- SX`` in adapted components."""
    m = gen.m
    Qv = gen.Q.value
    return np.r_[X, -Qv @ X + sign * X]


# --------------------------------------------------------------------------
# generalized Sasaki metric on the tangent manifold


def transfer_matrices(sigma: Jet) -> tuple[Jet, Jet]:
    """``i = diag(I, sigma^{-1})`` and ``i^{-1} = diag(I, sigma)``."""
    m = sigma.shape[0]
    e = np.eye(m)
    z = np.zeros((m, m))
    return jblock([[e, z], [z, jinv(sigma)]]), jblock([[e, z], [z, sigma]])


@dataclass
class GeneralizedSasakiMetric:
    """A generalized Sasaki metric at one point, with jets of all its parts.

    ``G``, ``gamma``, ``H``, ``Phi`` and ``gH`` are adapted-frame matrices.
    """

    local: LocalFrame
    gen: GenMetricData
    sigma_field: object = None
    psi_field: object = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.local.m

    @property
    def n(self) -> int:
        return self.local.n

    @property
    def point(self) -> np.ndarray:
        return self.local.point

    @property
    def order(self) -> int:
        return self.gen.sigma.order

    @property
    def Q(self) -> Jet:
        return self.gen.Q

    @property
    def sigma(self) -> Jet:
        return self.gen.sigma

    def _block(self, hh, hv, vh, vv) -> Jet:
        return jblock([[hh, hv], [vh, vv]])

    @property
    def G(self) -> Jet:
        """Closed form ``2G = [[beta, -psi], [psi, sigma]]`` in the adapted frame."""
        if "G" not in self.cache:
            g = self.gen
            self.cache["G"] = 0.5 * self._block(g.beta, -g.psi, -g.psi.T, g.sigma)
        return self.cache["G"]

    @property
    def gamma(self) -> Jet:
        if "gamma" not in self.cache:
            z = np.zeros((self.m, self.m))
            self.cache["gamma"] = self._block(self.gen.sigma, z, z, self.gen.sigma)
        return self.cache["gamma"]

    @property
    def H(self) -> Jet:
        """Transferred paracomplex structure ``(Q + S(I - Q^2)) pr_H + (S' - SQS') pr_V``."""
        if "H" not in self.cache:
            Q = self.gen.Q
            e = Jet.constant(np.eye(self.m), Q.nvars, Q.order)
            self.cache["H"] = self._block(Q, e, e - _mm(Q, Q), -Q)
        return self.cache["H"]

    @property
    def Phi(self) -> Jet:
        return jeinsum("ij,jk->ik", paracomplex_matrix(self.m), self.H)

    @property
    def gH(self) -> Jet:
        """Transferred neutral metric ``(sigma(S'pr_V Z, pr_H Z') + sym) / 2``."""
        if "gH" not in self.cache:
            z = np.zeros((self.m, self.m))
            s = self.gen.sigma
            self.cache["gH"] = 0.5 * self._block(z, s, s, z)
        return self.cache["gH"]

    def H_via_transfer(self) -> Jet:
        i, iinv = transfer_matrices(self.gen.sigma)
        return jeinsum("ab,bc,cd->ad", i, self.gen.H, iinv)

    def G_via_transfer(self) -> Jet:
        """``G(Z, Z') = G_pi(i^{-1} Z, i^{-1} Z')`` with ``G_pi = H^T g``."""
        _, iinv = transfer_matrices(self.gen.sigma)
        gp = jeinsum("ba,bc->ac", self.gen.H, neutral_metric(self.m))
        return jeinsum("ba,bc,cd->ad", iinv, gp, iinv)

    def G_via_gamma(self) -> Jet:
        """``G(Z, Z') = gamma((P_H H) Z, Z') / 2``."""
        return 0.5 * jeinsum("ba,bc->ac", self.Phi, self.gamma)

    def residuals(self) -> dict:
        m = self.m
        G, gam, H, Phi, gH = (a.value for a in (self.G, self.gamma, self.H, self.Phi, self.gH))
        P = paracomplex_matrix(m)
        res = {
            "g_symmetric": float(np.max(np.abs(G - G.T))),
            "g_transfer_route": float(np.max(np.abs(G - self.G_via_transfer().value))),
            "g_gamma_route": float(np.max(np.abs(G - self.G_via_gamma().value))),
            "h_transfer_route": float(np.max(np.abs(H - self.H_via_transfer().value))),
            "h_involution": float(np.max(np.abs(H @ H - np.eye(2 * m)))),
            "phi_gamma_symmetric": float(np.max(np.abs(gam @ Phi - (gam @ Phi).T))),
            "phi_paracomplex": float(np.max(np.abs(Phi @ P @ Phi - P))),
            "neutral_h_symmetric": float(np.max(np.abs(H.T @ gH - gH @ H))),
            "g_h_symmetric": float(np.max(np.abs(H.T @ G - G @ H))),
        }
        return res

    def neutral_signature(self) -> tuple[int, int]:
        w = np.linalg.eigvalsh(self.gH.value)
        return int(np.sum(w > 0)), int(np.sum(w < 0))

    def block_residuals(self) -> dict:
        """Blocks of ``G`` against the displayed values on frame vectors."""
        m = self.m
        G = self.G.value
        s, psi, b = self.gen.sigma.value, self.gen.psi.value, self.gen.beta.value
        Sp = s_prime_matrix(m)
        E = np.eye(2 * m)
        # -psi(X_i, S' d/dy^j)
        hv = np.array([[-(E[:m, i] @ psi @ (Sp @ E[:, m + j])[:m]) for j in range(m)] for i in range(m)])
        return {
            "hh": float(np.max(np.abs(2 * G[:m, :m] - b))),
            "hv": float(np.max(np.abs(2 * G[:m, m:] - hv))),
            "vv": float(np.max(np.abs(2 * G[m:, m:] - s))),
        }


def sasaki_metric(sigma, psi, connection: NonlinearConnection, point, order: int = 2,
                  local: LocalFrame | None = None) -> GeneralizedSasakiMetric:
    """Generalized Sasaki metric of ``(sigma, psi)`` subordinated to ``connection``."""
    point = np.asarray(point, dtype=float)
    if local is None:
        local = LocalFrame(connection, point, order)
    gen = build_gen_metric(sigma, psi, point, order)
    return GeneralizedSasakiMetric(local, gen, sigma, psi)


# --------------------------------------------------------------------------
# identification maps


@dataclass(frozen=True)
class IdentificationMaps:
    """Adapted-component matrices of the canonical identifications.

    ``h`` and ``v`` send a pair ``(X, alpha)`` to a (vector, covector) pair on
    the tangent manifold, as a ``4m`` column ``(Z, kappa)`` with ``kappa`` on
    the coframe ``(dx, theta)``.  ``i`` and ``j`` act on the compressed ``2m``
    components of ``H + H*`` and ``V + V*``.
    """

    h: np.ndarray
    v: np.ndarray
    i: np.ndarray
    i_inv: np.ndarray
    j: np.ndarray
    j_inv: np.ndarray

    @property
    def m(self) -> int:
        return self.i.shape[0] // 2

    def residuals(self, pairs) -> dict:
        m = self.m
        S, Sp, P = tangent_structure_matrix(m), s_prime_matrix(m), paracomplex_matrix(m)
        z = np.zeros((2 * m, 2 * m))
        to_v = np.block([[S, z], [z, Sp.T]])  # (X, nu) -> (SX, nu o S')
        to_h = np.block([[Sp, z], [z, S.T]])  # (Y, kappa) -> (S'Y, kappa o S)
        e = np.eye(2 * m)
        return {
            "i_roundtrip": float(np.max(np.abs(self.i @ self.i_inv - e))),
            "j_roundtrip": float(np.max(np.abs(self.j @ self.j_inv - e))),
            "v_h_inverse": max(float(np.max(np.abs(self.v @ p - to_v @ self.h @ p))) for p in pairs),
            "h_v_inverse": max(float(np.max(np.abs(self.h @ p - to_h @ self.v @ p))) for p in pairs),
            # (S + S') j = i (h v^-1) on compressed components
            "diagram": float(np.max(np.abs(P @ self.j - self.i))),
        }


def identification_maps(sigma: np.ndarray) -> IdentificationMaps:
    """Maps at a point for the tangent metric with horizontal metric ``sigma``.

    ``i^{-1} Z = (pr_H Z, flat_gamma S' pr_V Z)`` and
    ``j^{-1} Z = (pr_V Z, flat_gamma S pr_H Z)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    m = sigma.shape[0]
    e, z = np.eye(m), np.zeros((m, m))
    h = np.zeros((4 * m, 2 * m))
    h[:m, :m] = e  # X -> X^h
    h[2 * m:3 * m, m:] = e  # alpha -> pi^* alpha = alpha_i dx^i
    v = np.zeros((4 * m, 2 * m))
    v[m:2 * m, :m] = e  # X -> X^v
    v[3 * m:, m:] = e  # alpha -> alpha_i [theta^i]
    i_inv = np.block([[e, z], [z, sigma]])
    j_inv = np.block([[z, e], [sigma, z]])
    return IdentificationMaps(h, v, np.linalg.inv(i_inv), i_inv, np.linalg.inv(j_inv), j_inv)


def projection_maps(m: int) -> dict:
    """``S``, ``S'``, ``P_H`` and the two projectors in adapted components."""
    return {
        "S": tangent_structure_matrix(m),
        "S_prime": s_prime_matrix(m),
        "P_H": paracomplex_matrix(m),
        "pr_H": horizontal_projector(m),
        "pr_V": vertical_projector(m),
    }
