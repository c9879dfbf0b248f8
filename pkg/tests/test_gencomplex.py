import numpy as np
import pytest

from tangent_forge.bundle import (
    ConstructionError,
    ExprField,
    NonlinearConnection,
    VelocityTensor,
    connection_from_base_metric,
)
from tangent_forge.frames import LocalFrame
from tangent_forge.gencomplex import (
    HorizontalCalculus,
    VdgAlmostComplex,
    compatibility_residuals,
    complex_structure,
    horizontal_nijenhuis,
    horizontal_nijenhuis_table,
    horizontal_nijenhuis_tangent,
    integrability_tensors,
    metric_algebroid_residuals,
    nijenhuis_projections,
    reverse_transfer,
    sasaki_kahler_check,
    schouten_concomitant,
    split_blocks,
    symplectic_structure,
    transfer_J,
    transfer_J_formula,
    vd_complex_conditions,
)
from tangent_forge.genmetric import sasaki_metric
from tangent_forge.jets import Jet, jblock, jeinsum
from tangent_forge.oracle import classical_integrability

from conftest import sphere_data, velocity_data

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
FLAT2 = NonlinearConnection.flat(2)
FLAT4 = NonlinearConnection.flat(4)
P2 = np.array([0.3, -0.2, 0.4, 0.1])
P4 = np.array([0.3, -0.2, 0.1, 0.25, 0.4, 0.1, -0.3, 0.2])
OMEGA4 = ExprField([["0", "1", "0", "0"], ["-1", "0", "0", "0"],
                    ["0", "0", "0", "1+x1"], ["0", "0", "-(1+x1)", "0"]])


class _Block:
    def __init__(self, full, k):
        self.full, self.k = full, k

    def jet(self, point, order):
        return split_blocks(self.full.jet(point, order))[self.k]


class Conjugated:
    """``e^{-B} e^{beta} J0 e^{-beta} e^{B}``: a generic structure with all blocks nonzero."""

    def __init__(self, A0, B, beta):
        self.A0 = np.asarray(A0, dtype=float)
        self.B, self.beta = ExprField(B), ExprField(beta)

    def jet(self, point, order):
        m = self.A0.shape[0]
        e, z = np.eye(m), np.zeros((m, m))
        J0 = np.block([[self.A0, z], [z, -self.A0.T]])
        B, bt = self.B.jet(point, order), self.beta.jet(point, order)
        eB, emB = jblock([[e, z], [B, e]]), jblock([[e, z], [-B, e]])
        eb, emb = jblock([[e, bt], [z, e]]), jblock([[e, -bt], [z, e]])
        return jeinsum("ab,bc,cd,de,ef->af", emB, eb, J0, emb, eB)

    def structure(self):
        return VdgAlmostComplex(_Block(self, 0), _Block(self, 1), _Block(self, 2))


GENERIC = Conjugated(ROT, [["0", "x1*y2+0.3*x2"], ["-(x1*y2+0.3*x2)", "0"]],
                     [["0", "0.2*y1+x2^2"], ["-(0.2*y1+x2^2)", "0"]])


def random_sigma(rng, m):
    a = rng.normal(size=(m, m))
    return a @ a.T + m * np.eye(m)


def test_structure_invariants():
    for J in (complex_structure(ROT), symplectic_structure(ROT), GENERIC.structure()):
        assert max(J.invariant_residuals(P2).values()) <= 1e-12
    bad = VdgAlmostComplex(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ConstructionError, match="square"):
        bad.check([P2])


def test_transfer_of_rotation_on_flat_data():
    JT = transfer_J(complex_structure(ROT).jet(P2, 1), Jet.constant(np.eye(2), 4, 1)).value
    assert np.array_equal(JT @ JT, -np.eye(4))
    assert np.array_equal(JT[:2, :2], ROT) and np.array_equal(JT[2:, 2:], ROT)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_transfer_squares_and_is_compatible(seed):
    rng = np.random.default_rng(seed)
    sigma = random_sigma(rng, 2)
    a = rng.normal(size=(2, 2))
    for J in (symplectic_structure(a - a.T), GENERIC.structure()):
        JT = transfer_J(J.jet(P2, 1), Jet.constant(sigma, 4, 1)).value
        res = compatibility_residuals(JT, sigma)
        assert max(res.values()) <= 1e-12
        z = rng.normal(size=4)
        A, w, b = (x.value for x in J.blocks(P2, 0))
        assert np.allclose(transfer_J_formula(A, w, b, sigma, z), JT @ z, atol=1e-12)


def test_compatibility_formulations_agree_off_the_structure():
    rng = np.random.default_rng(3)
    sigma = random_sigma(rng, 2)
    res = compatibility_residuals(rng.normal(size=(4, 4)), sigma)
    assert res["neutral"] > 1e-3 and res["gamma_form"] > 1e-3
    assert abs(res["gamma_form"] - 2 * res["neutral"]) <= 1e-12


def test_reverse_transfer_round_trip():
    sig, _, _ = velocity_data()
    sj = sig.jet(P2, 1)
    J = GENERIC.jet(P2, 1)
    JT = transfer_J(J, sj)
    A, w, b = reverse_transfer(JT, sj)
    again = transfer_J(jblock([[A, w], [b, -A.T]]), sj)
    assert np.max(np.abs(again.coeffs - JT.coeffs)) <= 1e-12
    assert np.max(np.abs(jblock([[A, w], [b, -A.T]]).value - J.value)) <= 1e-12


def test_flat_bracket_of_constant_pairs():
    hc = HorizontalCalculus(LocalFrame(FLAT2, P2, 2))
    p = Jet.constant(np.array([1.0, 2.0, 0.5, -1.0]), 4, 2)
    q = Jet.constant(np.array([0.3, 0.0, 1.0, 4.0]), 4, 2)
    assert np.all(hc.pair_bracket(p, q).value == 0.0)


def test_sphere_frame_pairs_close():
    _, t = sphere_data()
    hc = HorizontalCalculus(LocalFrame(t, np.array([1.1, 0.3, 0.4, -0.6]), 2))
    e = np.eye(4)
    for i in range(2):
        for j in range(2):
            br = hc.pair_bracket(Jet.constant(e[i], 4, 2), Jet.constant(e[j], 4, 2)).value
            assert np.max(np.abs(br)) <= 1e-14


def test_bracket_is_antisymmetric():
    _, _, t = velocity_data()
    hc = HorizontalCalculus(LocalFrame(t, P2, 2))
    p = ExprField(["x1*y2", "sin(x2)", "y1^2", "x1+y2"]).jet(P2, 2)
    q = ExprField(["cos(y1)", "x2*x1", "y2", "exp(0.3*x1)"]).jet(P2, 2)
    assert np.allclose(hc.pair_bracket(p, q).value, -hc.pair_bracket(q, p).value, atol=1e-12)


def test_metric_algebroid_axioms():
    _, _, t = velocity_data()
    local = LocalFrame(t, P2, 3)
    fields = [ExprField(row).jet(P2, 3) for row in (
        ["x1*y2", "sin(x2)", "y1^2", "x1+y2"],
        ["cos(y1)", "x2*x1", "y2", "exp(0.3*x1)"],
        ["y1*y2", "1+x1^2", "x2*y1", "0.5"],
    )]
    f = ExprField("sin(x1)*y2 + x2").jet(P2, 3)
    res = metric_algebroid_residuals(local, *fields, f)
    assert res["metric"] <= 1e-9 and res["leibniz"] <= 1e-9


def test_concomitant_trivial_cases():
    local = LocalFrame(FLAT2, P2, 2)
    A = ExprField([["x1", "y2"], ["x2^2", "y1*x1"]]).jet(P2, 2)
    assert np.all(schouten_concomitant(Jet.zeros((2, 2), 4, 2), A, local) == 0.0)
    w = ExprField([["0", "x1*y1"], ["-x1*y1", "0"]]).jet(P2, 2)
    assert np.max(np.abs(schouten_concomitant(w, Jet.constant(np.eye(2), 4, 2), local))) <= 1e-14


def test_concomitant_matches_coordinate_formula():
    J = Conjugated(ROT, [["0", "0.3*x2"], ["-0.3*x2", "0"]], [["0", "x1*x2"], ["-x1*x2", "0"]])
    local = LocalFrame(FLAT2, P2, 2)
    A, w, _ = split_blocks(J.jet(P2, 2))
    classical = classical_integrability(J.structure(), FLAT2, P2)["concomitant"]
    assert np.max(np.abs(schouten_concomitant(w, A, local) - classical)) <= 1e-9


@pytest.mark.parametrize("structure, connection, point", [
    (GENERIC.structure(), velocity_data()[2], P2),
    (symplectic_structure(OMEGA4), FLAT4, P4),
])
def test_integrability_tensors_match_classical(structure, connection, point):
    rep = integrability_tensors(structure.jet(point, 2), LocalFrame(connection, point, 2))
    classical = classical_integrability(structure, connection, point)
    for name, tensor in rep.tensors.items():
        assert np.max(np.abs(tensor - classical[name])) <= 1e-8, name


def test_integrable_examples_with_contrast():
    lifted = complex_structure(ROT)
    assert integrability_tensors(lifted.jet(P2, 2), LocalFrame(FLAT2, P2, 2)).integrable
    sym = symplectic_structure(ROT)  # omega = dx1 ^ dx2 up to sign
    assert integrability_tensors(sym.jet(P2, 2), LocalFrame(FLAT2, P2, 2)).integrable
    rep = integrability_tensors(symplectic_structure(OMEGA4).jet(P4, 2), LocalFrame(FLAT4, P4, 2))
    assert not rep.integrable
    assert max(rep.residuals[k] for k in ("schouten_ww", "nijenhuis", "db_A")) > 1e-3
    # d'b = dx1 ^ dx3 ^ dx4
    db = HorizontalCalculus(LocalFrame(FLAT4, P4, 2)).d2(OMEGA4.jet(P4, 2)).value
    assert abs(db[0, 2, 3] - 1.0) <= 1e-12
    assert np.count_nonzero(np.abs(db) > 1e-12) == 6


def test_integrability_needs_derivatives():
    with pytest.raises(ConstructionError):
        integrability_tensors(complex_structure(ROT).jet(P2, 0), LocalFrame(FLAT2, P2, 0))


def test_horizontal_lift_functoriality():
    s = VelocityTensor.parse([["exp(2*x1)" if i == k else "0" for k in range(4)] for i in range(4)],
                             4, "symmetric")
    t = connection_from_base_metric(s)
    J = symplectic_structure(OMEGA4)
    x = P4[:4]
    base = integrability_tensors(J.jet(np.r_[x, 0, 0, 0, 0], 2), LocalFrame(t, np.r_[x, 0, 0, 0, 0], 2)).residuals
    assert max(base.values()) > 1e-3
    for y in ([0.4, -0.6, 0.2, 0.1], [1.0, 0.2, -0.5, 0.3]):
        p = np.r_[x, y]
        assert np.max(np.abs(t.value(p))) > 0.1
        lifted = integrability_tensors(J.jet(p, 2), LocalFrame(t, p, 2)).residuals
        for name in base:
            assert abs(lifted[name] - base[name]) <= 1e-10


def test_horizontal_nijenhuis_routes():
    Jj = complex_structure(ROT).jet(P2, 2)
    assert np.max(np.abs(horizontal_nijenhuis_table(Jj, LocalFrame(FLAT2, P2, 2)))) <= 1e-9
    Jj = symplectic_structure(OMEGA4).jet(P4, 2)
    local = LocalFrame(FLAT4, P4, 2)
    assert np.max(np.abs(horizontal_nijenhuis_table(Jj, local))) > 1e-3
    for name, (a, b) in nijenhuis_projections(Jj, local).items():
        assert np.max(np.abs(a - b)) <= 1e-8, name
    _, _, t = velocity_data()
    for name, (a, b) in nijenhuis_projections(GENERIC.jet(P2, 2), LocalFrame(t, P2, 2)).items():
        assert np.max(np.abs(a - b)) <= 1e-8, name


def test_horizontal_nijenhuis_is_antisymmetric():
    local = LocalFrame(velocity_data()[2], P2, 2)
    J = GENERIC.jet(P2, 2)
    rng = np.random.default_rng(4)
    p, q = rng.normal(size=(2, 4))
    assert np.max(np.abs(horizontal_nijenhuis(J, local, p, p))) <= 1e-14
    assert np.allclose(horizontal_nijenhuis(J, local, p, q), -horizontal_nijenhuis(J, local, q, p))
    sig, psi, t = velocity_data()
    gs = sasaki_metric(sig, psi, t, P2)
    z = rng.normal(size=4)
    assert np.max(np.abs(horizontal_nijenhuis_tangent(J, gs, z, z))) <= 1e-14


def vd_pieces(g="1"):
    j = np.kron(np.eye(2), ROT)
    f = np.zeros((4, 4), dtype=object)
    f[:] = "0"
    f[0, 2] = g  # f e3 = g e1
    f[1, 3] = f"-({g})"  # f e4 = -g e2
    return j, ExprField(f)


@pytest.mark.parametrize("g, integrable", [("1", True), ("1+x1", False)])
def test_velocity_dependent_complex_family(g, integrable):
    j, f = vd_pieces(g)
    fj = f.jet(P4, 2)
    jj = Jet.constant(j, 8, 2)
    phi = Jet.variable(4, P4, 2)  # phi = y1
    A = jj + jeinsum(",ij->ij", phi, fj)
    assert np.max(np.abs(A.value @ A.value + np.eye(4))) <= 1e-12
    local = LocalFrame(FLAT4, P4, 2)
    direct = integrability_tensors(complex_structure(A).jet(P4, 2), local).tensors["nijenhuis"]
    cond = vd_complex_conditions(jj, fj, local)
    y1 = P4[4]
    assert np.max(np.abs(direct - (cond["nijenhuis_j"] + y1 * cond["mixed"] + y1 ** 2 * cond["nijenhuis_f"]))) <= 1e-12
    verdict = max(float(np.max(np.abs(v))) for v in cond.values()) <= 1e-9
    assert verdict == integrable
    assert (np.max(np.abs(direct)) <= 1e-9) == integrable


def test_sasaki_kahler_positive():
    pts = [P2, np.array([-0.1, 0.5, 0.2, 0.7])]
    v = sasaki_kahler_check(np.eye(2), np.zeros((2, 2)), FLAT2, complex_structure(ROT), pts)
    assert v.positive and v.verdict == "Sasaki-Kahler"


def test_sasaki_kahler_non_integrable_complement():
    sigma = VelocityTensor.parse([["1+x1^2" if i == k else "0" for k in range(4)] for i in range(4)],
                                 4, "symmetric")
    v = sasaki_kahler_check(sigma, np.zeros((4, 4)), FLAT4, complex_structure(np.kron(np.eye(2), ROT)), [P4])
    assert v.verdict == "not integrable"
    assert "J'" in v.failing and "J" not in v.failing


def test_sasaki_kahler_not_hermitian():
    v = sasaki_kahler_check(np.diag([1.0, 2.0]), np.zeros((2, 2)), FLAT2, complex_structure(ROT), [P2])
    assert v.verdict == "not Hermitian" and not v.positive
