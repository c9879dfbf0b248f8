"""Independent verification routes built on finite differences.

Nothing here differentiates through jets: every derivative an oracle needs is
a central-difference stencil on plain point evaluators.  The registry at the
bottom pairs each closed-form identity of the engine with a second route and
is what ``tangent-forge verify`` runs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bundle import ChartSpec, ConstructionError, NonlinearConnection, VelocityTensor
from .connections import (
    _qderivative,
    canonical_connections,
    cartan_horizontal_table,
    double_metric_cartan,
    levi_civita_of_G,
    levi_civita_of_G_via_cartan,
    paired_connection_transfer,
)
from .curvtor import (
    curvature_cartan_cases,
    curvature_cartan_from_bott,
    curvature_dmc_closed_form,
    curvature_tensor,
    ricci,
    ricci_dmc,
    torsion_closed_form,
    torsion_tensor,
)
from .gencomplex import (
    VdgAlmostComplex,
    integrability_tensors,
    nijenhuis_projections,
    transfer_J,
    transfer_J_formula,
)
from .genmetric import GeneralizedSasakiMetric, build_gen_metric, sasaki_metric
from .jets import JetOrderError


class OracleError(ValueError):
    """An oracle cannot be evaluated as requested."""


class NotApplicable(Exception):
    """A registered check does not apply to the given setting."""


# --------------------------------------------------------------------------
# configuration


TIERS = ("algebraic", "two_path", "two_path_loose", "fd_first", "fd_second")


@dataclass(frozen=True)
class ToleranceLadder:
    algebraic: float = 1e-12
    two_path: float = 1e-10
    two_path_loose: float = 1e-9
    fd_first: float = 1e-8
    fd_second: float = 1e-6

    def __post_init__(self):
        values = [getattr(self, t) for t in TIERS]
        if any(v <= 0 for v in values):
            raise ValueError("tolerances must be positive")
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValueError("tolerance ladder must be ordered from algebraic to fd_second")

    def __getitem__(self, tier: str) -> float:
        if tier not in TIERS:
            raise KeyError(f"unknown tolerance tier {tier!r}")
        return getattr(self, tier)

    def scaled(self, factor: float) -> "ToleranceLadder":
        return ToleranceLadder(*(getattr(self, t) * factor for t in TIERS))


@dataclass(frozen=True)
class OracleConfig:
    h: float = 1e-4
    richardson: bool = True
    ladder: ToleranceLadder = field(default_factory=ToleranceLadder)
    samples: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")

    @classmethod
    def profile(cls, name: str = "default", **kw) -> "OracleConfig":
        """``default`` or ``strict`` (every tolerance tightened tenfold)."""
        if name == "default":
            return cls(**kw)
        if name == "strict":
            return cls(ladder=ToleranceLadder().scaled(0.1), **kw)
        raise ValueError(f"unknown tolerance profile {name!r}")

    def step(self, order: int) -> float:
        # roundoff grows like eps / h^k, so higher derivatives get wider stencils
        return self.h * 10.0 ** (min(order, 3) - 1)


# --------------------------------------------------------------------------
# finite differences

# central stencils (offset in units of h, weight) for d^k/dz^k, all O(h^2)
_STENCILS = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def _central(f, point, counts, h):
    axes = [(k, _STENCILS[a]) for k, a in enumerate(counts) if a]
    total = 0.0
    for combo in itertools.product(*(s for _, s in axes)):
        z = point.copy()
        weight = 1.0
        for (k, _), (off, wt) in zip(axes, combo):
            z[k] += off * h
            weight *= wt
        total = total + weight * np.asarray(f(z), dtype=float)
    return total / h ** sum(counts)


def fd_derivative(f: Callable, point, multi_index, config: OracleConfig | None = None,
                  box=None, h: float | None = None):
    """Central-difference estimate of ``d^a f(point)`` for a multi-index ``a``.

    ``multi_index`` holds one derivative count per coordinate.  With Richardson
    extrapolation on, estimates at ``h`` and ``h/2`` are combined to cancel the
    ``h^2`` error term.  ``box`` is an ``(n, 2)`` array of open bounds.
    """
    config = config or OracleConfig()
    point = np.asarray(point, dtype=float)
    counts = tuple(int(a) for a in multi_index)
    if len(counts) != len(point):
        raise OracleError(f"multi-index has {len(counts)} entries for a point with {len(point)} coordinates")
    if any(a < 0 or a > 4 for a in counts):
        raise OracleError("derivative counts must lie in 0..4")
    order = sum(counts)
    if order == 0:
        return np.asarray(f(point), dtype=float)
    h = config.step(order) if h is None else h
    if box is not None:
        box = np.asarray(box, dtype=float)
        reach = np.array([h * (2 if a > 2 else 1 if a else 0) for a in counts])
        if np.any(point - reach <= box[:, 0]) or np.any(point + reach >= box[:, 1]):
            raise OracleError(
                f"stencil of half-width {reach.max():.1e} leaves the chart box at "
                f"{np.round(point, 6).tolist()}; use a smaller h or an interior point")
    coarse = _central(f, point, counts, h)
    if not config.richardson:
        return coarse
    fine = _central(f, point, counts, h / 2)
    return (4.0 * fine - coarse) / 3.0


def fd_gradient(f: Callable, point, config: OracleConfig | None = None, box=None, h=None) -> np.ndarray:
    """All first partials, stacked on a new last axis."""
    point = np.asarray(point, dtype=float)
    n = len(point)
    parts = [fd_derivative(f, point, np.eye(n, dtype=int)[k], config, box, h) for k in range(n)]
    return np.stack(parts, axis=-1)


# --------------------------------------------------------------------------
# brute-force Riemannian geometry


def _check_metric(g: np.ndarray, point) -> None:
    if abs(np.linalg.det(g)) < 1e-12 * max(1.0, np.max(np.abs(g))) ** len(g):
        raise OracleError(f"degenerate metric at {np.round(point, 6).tolist()}")


def direct_christoffel(metric: Callable, point, config: OracleConfig | None = None, box=None,
                       h: float | None = None) -> np.ndarray:
    """``Gamma[k, i, j] = Gamma^k_{ij}`` from finite differences of the metric grid."""
    point = np.asarray(point, dtype=float)
    g = np.asarray(metric(point), dtype=float)
    _check_metric(g, point)
    dg = fd_gradient(metric, point, config, box, h)  # dg[i, j, k] = d_k g_ij
    first = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))  # [l, i, j]
    return np.einsum("kl,lij->kij", np.linalg.inv(g), first)


def direct_riemann(metric: Callable, point, config: OracleConfig | None = None, box=None) -> np.ndarray:
    """``R[e, b, c, d] = (R(d_c, d_d) d_b)^e`` from nested finite differences."""
    config = config or OracleConfig()
    G = direct_christoffel(metric, point, config, box)
    outer = config.step(2)
    dG = fd_gradient(lambda z: direct_christoffel(metric, z, config, box, config.h), point, config, box, outer)
    # dG[e, d, b, c] = d_c Gamma^e_{db}
    return (np.einsum("edbc->ebcd", dG) - np.einsum("ecbd->ebcd", dG)
            + np.einsum("eca,adb->ebcd", G, G) - np.einsum("eda,acb->ebcd", G, G))


def direct_ricci(metric: Callable, point, config: OracleConfig | None = None, box=None) -> np.ndarray:
    return np.einsum("abad->bd", direct_riemann(metric, point, config, box))


# --------------------------------------------------------------------------
# tangent-manifold helpers


def frame_matrix(connection: NonlinearConnection, point) -> np.ndarray:
    """Adapted frame vectors as columns in coordinate components."""
    t = connection.value(point)
    m = t.shape[0]
    return np.block([[np.eye(m), np.zeros((m, m))], [-t.T, np.eye(m)]])


def coordinate_sasaki_metric(sigma, psi, connection: NonlinearConnection) -> Callable:
    """Point evaluator of the generalized Sasaki metric in coordinate components."""
    def G(z):
        gen = build_gen_metric(sigma, psi, z, 0)
        Ga = 0.5 * np.block([[gen.beta.value, -gen.psi.value], [-gen.psi.value.T, gen.sigma.value]])
        Fi = np.linalg.inv(frame_matrix(connection, z))
        return Fi.T @ Ga @ Fi

    return G


def adapted_christoffel(metric: Callable, connection: NonlinearConnection, point,
                        config: OracleConfig | None = None, box=None) -> np.ndarray:
    """Levi-Civita coefficients ``[a, c, b] = (nabla_{E_c} E_b)^a`` of a coordinate metric."""
    point = np.asarray(point, dtype=float)
    Gc = direct_christoffel(metric, point, config, box)
    F = frame_matrix(connection, point)
    dF = fd_gradient(lambda z: frame_matrix(connection, z), point, config, box)  # [k, b, i]
    inner = np.einsum("kbi,ic->kcb", dF, F) + np.einsum("kij,ic,jb->kcb", Gc, F, F)
    return np.einsum("ak,kcb->acb", np.linalg.inv(F), inner)


def horizontal_fd(f: Callable, connection: NonlinearConnection, point,
                  config: OracleConfig | None = None, box=None) -> np.ndarray:
    """``X_i f`` stacked on a new last axis, via directional differences."""
    point = np.asarray(point, dtype=float)
    m = connection.m
    grad = fd_gradient(f, point, config, box)
    return np.einsum("...k,ki->...i", grad, frame_matrix(connection, point)[:, :m])


def classical_integrability(structure: VdgAlmostComplex, connection: NonlinearConnection, point,
                            config: OracleConfig | None = None, box=None) -> dict:
    """The four integrability tensors from their coordinate formulas.

    Horizontal frame fields have vanishing horizontal brackets, so the
    classical expressions apply verbatim with ``d_i`` replaced by ``X_i``.
    """
    def block(k):
        return lambda z: structure.blocks(z, 0)[k].value

    A, w, b = (block(k)(point) for k in range(3))
    dA, dw, db_ = (horizontal_fd(block(k), connection, point, config, box) for k in range(3))
    # dX[i, j, k] = X_k X^i_j
    t = np.einsum("il,jkl->ijk", w, dw)
    ww = t + t.transpose(1, 2, 0) + t.transpose(2, 0, 1)
    conc = (np.einsum("ij,ljk->ikl", w, dA) - np.einsum("ij,lkj->ikl", w, dA)
            - np.einsum("al,ika->ikl", w, dA) + np.einsum("ak,ila->ikl", A, dw)
            - np.einsum("ij,jlk->ikl", A, dw))
    NA = (np.einsum("ka,ibk->iab", A, dA) - np.einsum("kb,iak->iab", A, dA)
          + np.einsum("ij,jab->iab", A, dA) - np.einsum("ij,jba->iab", A, dA))
    db = np.einsum("bca->abc", db_) + np.einsum("cab->abc", db_) + np.einsum("abc->abc", db_)
    bA = lambda z: structure.blocks(z, 0)[0].value.T @ structure.blocks(z, 0)[2].value  # noqa: E731
    dbA_ = horizontal_fd(bA, connection, point, config, box)
    dbA = np.einsum("bca->abc", dbA_) + np.einsum("cab->abc", dbA_) + dbA_
    cyc = (np.einsum("ka,kbc->abc", A, db) + np.einsum("kb,kca->abc", A, db)
           + np.einsum("kc,kab->abc", A, db))
    return {
        "schouten_ww": ww,
        "concomitant": conc,
        "nijenhuis": NA - np.einsum("ic,bac->iab", w, db),
        "db_A": dbA - cyc,
    }


# --------------------------------------------------------------------------
# two-path comparison


@dataclass
class TwoPathReport:
    name: str
    max_residual: float
    mean_residual: float
    tolerance: float
    passed: bool
    worst_point: list
    points: int
    anchor: str = ""

    def record(self) -> dict:
        return {"identity": self.name, "anchor": self.anchor, "residual": self.max_residual,
                "mean_residual": self.mean_residual, "tolerance": self.tolerance,
                "verdict": "pass" if self.passed else "fail", "worst_point": self.worst_point,
                "points": self.points}


def two_path_report(name: str, route_a: Callable, route_b: Callable, points, tolerance: float = 1e-10,
                    anchor: str = "") -> TwoPathReport:
    """Max-norm discrepancy of two evaluators over ``points``."""
    points = [np.asarray(p, dtype=float) for p in points]
    res = [float(np.max(np.abs(np.asarray(route_a(p)) - np.asarray(route_b(p))), initial=0.0))
           for p in points]
    worst = int(np.argmax(res)) if res else 0
    mx = max(res, default=0.0)
    return TwoPathReport(name, mx, float(np.mean(res)) if res else 0.0, tolerance,
                         bool(mx <= tolerance), points[worst].tolist() if points else [], len(points), anchor)


# --------------------------------------------------------------------------
# settings and the registry


@dataclass
class Setting:
    """Everything a registered check may need: chart, metric data, connection, structure."""

    chart: ChartSpec
    sigma: VelocityTensor
    psi: VelocityTensor
    connection: NonlinearConnection
    structure: VdgAlmostComplex | None = None
    base_metric: VelocityTensor | None = None
    name: str = ""
    order: int = 2
    _metrics: dict = field(default_factory=dict, repr=False)
    _flags: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.chart.m

    def metric(self, point) -> GeneralizedSasakiMetric:
        key = tuple(np.round(np.asarray(point, dtype=float), 15))
        if key not in self._metrics:
            self._metrics[key] = sasaki_metric(self.sigma, self.psi, self.connection, point, self.order)
        return self._metrics[key]

    def probe_points(self) -> np.ndarray:
        return self.chart.sample_points(3, seed=12345)

    def satisfies(self, requirement: str) -> bool:
        if requirement not in self._flags:
            self._flags[requirement] = _REQUIREMENTS[requirement](self)
        return self._flags[requirement]


def _projectable(s: Setting) -> bool:
    pts = s.probe_points()
    return s.sigma.projectability_defect(pts) <= 1e-12 and s.psi.projectability_defect(pts) <= 1e-12


def _parallel(s: Setting) -> bool:
    """Projectable data with ``nabla^D Q = 0``."""
    if not _projectable(s):
        return False
    for p in s.probe_points():
        gs = s.metric(p)
        DQ = _qderivative(cartan_horizontal_table(gs), gs.Q, gs.local).value
        if np.max(np.abs(DQ)) > 1e-10:
            return False
    return True


def _definite(s: Setting) -> bool:
    for p in s.probe_points():
        gen = build_gen_metric(s.sigma, s.psi, p, 0)
        if min(np.linalg.eigvalsh(gen.sigma.value)) <= 0 or min(np.linalg.eigvalsh(gen.beta.value)) <= 0:
            return False
    return True


_REQUIREMENTS = {
    "structure": lambda s: s.structure is not None,
    "base": lambda s: s.base_metric is not None,
    "projectable": _projectable,
    "parallel": _parallel,
    "definite": _definite,
}

# closed formulas that must each carry at least one registered comparison
FORMULAS = (
    "generalized-sasaki-blocks",
    "transferred-paracomplex",
    "paired-connection-transfer",
    "double-metric-cartan-blocks",
    "double-metric-cartan-torsion",
    "levi-civita-via-cartan",
    "double-metric-cartan-curvature",
    "cartan-bott-curvature-relation",
    "cartan-curvature-cases",
    "parallel-form-torsion",
    "ricci-orthonormal-trace",
    "ricci-projectable-sigma",
    "transferred-complex-structure",
    "integrability-tensors",
    "nijenhuis-projections",
)
# checks of inputs rather than of closed formulas
AUXILIARY = ("nonlinear-connection",)


@dataclass(frozen=True)
class RegisteredCheck:
    name: str
    formula: str
    anchor: str
    tier: str
    build: Callable = field(repr=False)
    requires: tuple = ()

    def routes(self, setting: Setting, config: OracleConfig) -> tuple[Callable, Callable]:
        missing = [r for r in self.requires if not setting.satisfies(r)]
        if missing:
            raise NotApplicable(f"needs {', '.join(missing)} data")
        return self.build(setting, config)

    def run(self, setting: Setting, points, config: OracleConfig | None = None) -> TwoPathReport:
        config = config or OracleConfig()
        a, b = self.routes(setting, config)
        try:
            return two_path_report(self.name, a, b, points, config.ladder[self.tier], self.anchor)
        except JetOrderError as exc:
            raise NotApplicable(f"jets of the inputs are too shallow: {exc}") from exc


REGISTRY: dict[str, RegisteredCheck] = {}


def register(name, formula, anchor, tier, requires=()):
    if formula not in FORMULAS + AUXILIARY:
        raise ValueError(f"unknown formula {formula!r}")

    def deco(build):
        REGISTRY[name] = RegisteredCheck(name, formula, anchor, tier, build, tuple(requires))
        return build

    return deco


def registered_formulas() -> set:
    return {c.formula for c in REGISTRY.values()}


def _box(s: Setting) -> np.ndarray:
    return s.chart.bounds


@register("sasaki-blocks-vs-transfer", "generalized-sasaki-blocks",
          "closed-form blocks of G against the i-transfer of the pair-bundle metric", "algebraic")
def _(s, cfg):
    return (lambda p: s.metric(p).G.value), (lambda p: s.metric(p).G_via_transfer().value)


@register("sasaki-blocks-vs-gamma", "generalized-sasaki-blocks",
          "closed-form blocks of G against gamma(P_H H ., .) / 2", "algebraic")
def _(s, cfg):
    return (lambda p: s.metric(p).G.value), (lambda p: s.metric(p).G_via_gamma().value)


@register("paracomplex-vs-transfer", "transferred-paracomplex",
          "closed-form transferred H against i H i^-1", "algebraic")
def _(s, cfg):
    return (lambda p: s.metric(p).H.value), (lambda p: s.metric(p).H_via_transfer().value)


@register("paired-zero-vs-double-cartan", "paired-connection-transfer",
          "paired connection with D0 = Cartan, lambda = 0 against the double metric Cartan blocks",
          "two_path")
def _(s, cfg):
    def paired(p):
        gs = s.metric(p)
        return paired_connection_transfer(gs, cartan_horizontal_table(gs)).coefficients

    return paired, (lambda p: double_metric_cartan(s.metric(p)).coefficients)


@register("double-cartan-preserves-metrics", "double-metric-cartan-blocks",
          "double metric Cartan blocks preserve G and g_H and commute with H", "two_path")
def _(s, cfg):
    def defects(p):
        gs = s.metric(p)
        D = double_metric_cartan(gs)
        return np.array([D.compatibility_residual(gs.G), D.compatibility_residual(gs.gH),
                         D.commutator_residual(gs.H)])

    return defects, (lambda p: np.zeros(3))


@register("double-cartan-torsion-closed-vs-generic", "double-metric-cartan-torsion",
          "block torsion formulas against nabla_Z Z' - nabla_Z' Z - [Z, Z'] on frames", "two_path_loose")
def _(s, cfg):
    return ((lambda p: torsion_closed_form(s.metric(p))),
            (lambda p: torsion_tensor(double_metric_cartan(s.metric(p))).value))


@register("levi-civita-cartan-vs-fd-christoffel", "levi-civita-via-cartan",
          "Levi-Civita of G through Cartan plus Xi against finite-difference Christoffels", "fd_first")
def _(s, cfg):
    G = coordinate_sasaki_metric(s.sigma, s.psi, s.connection)
    return ((lambda p: levi_civita_of_G_via_cartan(s.metric(p)).coefficients),
            (lambda p: adapted_christoffel(G, s.connection, p, cfg, _box(s))))


@register("levi-civita-cartan-vs-koszul", "levi-civita-via-cartan",
          "Levi-Civita of G through Cartan plus Xi against the Koszul formula", "two_path")
def _(s, cfg):
    return ((lambda p: levi_civita_of_G_via_cartan(s.metric(p)).coefficients),
            (lambda p: levi_civita_of_G(s.metric(p)).coefficients))


@register("double-cartan-curvature-closed-vs-generic", "double-metric-cartan-curvature",
          "curvature of the double metric Cartan connection from Cartan curvature against the generic operator",
          "two_path_loose")
def _(s, cfg):
    return ((lambda p: curvature_dmc_closed_form(s.metric(p))),
            (lambda p: curvature_tensor(double_metric_cartan(s.metric(p))).coefficients))


@register("cartan-curvature-from-bott", "cartan-bott-curvature-relation",
          "Cartan curvature as Bott curvature plus Psi terms against the generic operator", "two_path_loose")
def _(s, cfg):
    return ((lambda p: curvature_cartan_from_bott(s.metric(p))),
            (lambda p: curvature_tensor(canonical_connections(s.metric(p))["cartan"]).coefficients))


@register("cartan-curvature-cases", "cartan-curvature-cases",
          "reduced Cartan curvature cases against the generic operator", "two_path_loose")
def _(s, cfg):
    def route(k):
        def f(p):
            cases = curvature_cartan_cases(s.metric(p))
            return np.concatenate([np.ravel(cases[c][k]) for c in sorted(cases)])
        return f

    return route(0), route(1)


@register("parallel-form-torsion", "parallel-form-torsion",
          "torsion for a projectable metric and parallel two-form: -pr_V[X, X'], 0, S(nabla^D_X S')Y",
          "two_path_loose", requires=("parallel",))
def _(s, cfg):
    def closed(p):
        gs = s.metric(p)
        m, n = gs.m, gs.n
        bott = canonical_connections(gs)["bott"].coefficients
        T = np.zeros((n, n, n))
        T[m:, :m, :m] = -gs.local.ehresmann()
        # S((nabla^D_X S') d/dy^j) = S(nabla^D_X X_j - S' nabla^D_X d/dy^j)
        hv = bott[:m, :m, :m] - bott[m:, :m, m:]
        T[m:, :m, m:] = hv
        T[m:, m:, :m] = -hv.transpose(0, 2, 1)
        return T

    return closed, (lambda p: torsion_tensor(double_metric_cartan(s.metric(p))).value)


@register("ricci-orthonormal-vs-coordinate-trace", "ricci-orthonormal-trace",
          "Ricci through beta- and sigma-orthonormal bases against the coordinate-frame trace",
          "two_path_loose", requires=("definite",))
def _(s, cfg):
    return ((lambda p: ricci_dmc(s.metric(p)).matrix),
            (lambda p: ricci(double_metric_cartan(s.metric(p)), coordinate=True).matrix))


@register("ricci-projectable-vs-base-ricci", "ricci-projectable-sigma",
          "Ricci of the double metric Cartan connection against the lifted base Ricci from finite differences",
          "fd_second", requires=("projectable", "definite"))
def _(s, cfg):
    m = s.m
    xbox = _box(s)[:m]

    def lifted(p):
        y0 = p[m:]
        ref = s.base_metric or s.sigma
        base = lambda x: ref.value(np.r_[x, y0])  # noqa: E731
        out = np.zeros((2 * m, 2 * m))
        out[:m, :m] = direct_ricci(base, p[:m], cfg, xbox)
        return out

    return (lambda p: ricci_dmc(s.metric(p)).matrix), lifted


@register("transferred-structure-vs-formula", "transferred-complex-structure",
          "i J i^-1 against the displayed action on tangent vectors", "algebraic", requires=("structure",))
def _(s, cfg):
    def formula(p):
        A, w, b = (j.value for j in s.structure.blocks(p, 0))
        sig = s.sigma.value(p)
        return np.column_stack([transfer_J_formula(A, w, b, sig, e) for e in np.eye(2 * s.m)])

    return ((lambda p: transfer_J(s.structure.jet(p, 0), s.sigma.jet(p, 0)).value), formula)


@register("integrability-tensors-vs-classical", "integrability-tensors",
          "bracket-built integrability tensors against their coordinate formulas with finite differences",
          "fd_first", requires=("structure",))
def _(s, cfg):
    names = ("schouten_ww", "concomitant", "nijenhuis", "db_A")

    def engine(p):
        T = integrability_tensors(s.structure.jet(p, 1), s.metric(p).local).tensors
        return np.concatenate([T[k].ravel() for k in names])

    def classical(p):
        T = classical_integrability(s.structure, s.connection, p, cfg, _box(s))
        return np.concatenate([T[k].ravel() for k in names])

    return engine, classical


@register("nijenhuis-projections-vs-tensors", "nijenhuis-projections",
          "projections of the horizontal Courant-Nijenhuis torsion against the four tensors", "two_path",
          requires=("structure",))
def _(s, cfg):
    def route(k):
        def f(p):
            pr = nijenhuis_projections(s.structure.jet(p, 1), s.metric(p).local)
            return np.concatenate([pr[name][k].ravel() for name in sorted(pr)])
        return f

    return route(0), route(1)


@register("connection-vs-base-christoffel", "nonlinear-connection",
          "connection coefficients against Gamma^j_ik(x) y^k of the base metric by finite differences",
          "fd_first", requires=("base",))
def _(s, cfg):
    m = s.m

    def reference(p):
        y0 = p[m:]
        G = direct_christoffel(lambda x: s.base_metric.value(np.r_[x, y0]), p[:m], cfg, _box(s)[:m])
        return np.einsum("jik,k->ij", G, p[m:])

    return (lambda p: s.connection.value(p)), reference


def applicable_checks(setting: Setting) -> list:
    out = []
    for c in REGISTRY.values():
        if all(setting.satisfies(r) for r in c.requires):
            out.append(c)
    return out


def run_registry(setting: Setting, points, config: OracleConfig | None = None, names=None) -> list:
    """Runs checks in registry order; inapplicable ones come back as skip records."""
    config = config or OracleConfig()
    out = []
    for name, check in REGISTRY.items():
        if names is not None and name not in names:
            continue
        try:
            out.append(check.run(setting, points, config).record())
        except NotApplicable as exc:
            out.append({"identity": name, "anchor": check.anchor, "verdict": "skip", "reason": str(exc),
                        "tolerance": config.ladder[check.tier]})
        except ConstructionError as exc:
            out.append({"identity": name, "anchor": check.anchor, "verdict": "skip", "reason": str(exc),
                        "tolerance": config.ladder[check.tier]})
    return out


__all__ = [
    "FORMULAS", "REGISTRY", "NotApplicable", "OracleConfig", "OracleError", "RegisteredCheck", "Setting",
    "ToleranceLadder", "TwoPathReport", "adapted_christoffel", "classical_integrability",
    "coordinate_sasaki_metric", "direct_christoffel", "direct_ricci", "direct_riemann", "fd_derivative",
    "fd_gradient", "frame_matrix", "horizontal_fd", "run_registry", "two_path_report",
]
