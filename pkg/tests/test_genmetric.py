import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangent_forge.bundle import ChartSpec, ConstructionError, NonlinearConnection, VelocityTensor
from tangent_forge.frames import paracomplex_matrix, tangent_structure_matrix
from tangent_forge.genmetric import (
    build_gen_metric,
    horizontal_iota,
    identification_maps,
    iota_pm,
    neutral_metric,
    projection_maps,
    sasaki_metric,
)

from conftest import sphere_data, velocity_data

P = np.array([0.7, 0.4, 0.3, -0.5])


def random_pair(rng, m):
    a = rng.normal(size=(m, m))
    sigma = a @ a.T + m * np.eye(m)
    b = rng.normal(size=(m, m))
    return sigma, 0.5 * (b - b.T)


def test_zero_psi_dictionary():
    gen = build_gen_metric(np.diag([2.0, 3.0]), np.zeros((2, 2)), np.zeros(4))
    assert np.all(gen.Q.value == 0)
    assert np.allclose(gen.beta.value, np.diag([2.0, 3.0]))
    H = gen.H.value
    assert np.allclose(H[:2, 2:], np.diag([0.5, 1 / 3]))
    assert np.allclose(H[2:, :2], np.diag([2.0, 3.0]))


@pytest.mark.parametrize("c", [0.0, 0.3, -1.7])
def test_constant_psi_on_flat_metric(c):
    psi = np.array([[0.0, c], [-c, 0.0]])
    gen = build_gen_metric(np.eye(2), psi, np.zeros(4))
    Q = -np.linalg.inv(np.eye(2)) @ psi.T  # flat_psi = -flat_sigma o Q
    assert np.allclose(gen.Q.value, Q)
    assert np.allclose(gen.beta.value, (1 + c * c) * np.eye(2))
    vecs = np.random.default_rng(0).normal(size=(10, 2))
    assert gen.beta_identity_residual(vecs) <= 1e-12


def test_dictionary_identities_on_velocity_data():
    sig, psi, _ = velocity_data()
    for p in ChartSpec.cube(2, (-0.8, 0.8), (-0.8, 0.8)).sample_points(50, seed=1):
        gen = build_gen_metric(sig, psi, p)
        assert max(gen.residuals().values()) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_dictionary_identities_random(seed, m):
    sigma, psi = random_pair(np.random.default_rng(seed), m)
    gen = build_gen_metric(sigma, psi, np.zeros(2 * m))
    assert max(gen.residuals().values()) <= 1e-11
    assert np.min(np.linalg.eigvalsh(gen.beta.value)) > 0


def test_degenerate_or_asymmetric_inputs():
    with pytest.raises(ConstructionError, match="degenerate"):
        build_gen_metric(np.diag([1.0, 0.0]), np.zeros((2, 2)), np.zeros(4))
    with pytest.raises(ConstructionError, match="symmetric"):
        build_gen_metric(np.array([[1.0, 0.2], [0.0, 1.0]]), np.zeros((2, 2)), np.zeros(4))
    with pytest.raises(ConstructionError, match="antisymmetric"):
        build_gen_metric(np.eye(2), np.eye(2), np.zeros(4))


def test_degenerate_beta_is_flagged():
    gen = build_gen_metric(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]), np.zeros(4))
    # Q^2 = -1 here, so beta = 2 sigma; a real Q with Q^2 = 1 needs an indefinite sigma
    assert not gen.beta_degenerate()
    gen = build_gen_metric(np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [-1.0, 0.0]]), np.zeros(4))
    assert gen.beta_degenerate()


def test_eigenbundles_and_iota():
    rng = np.random.default_rng(2)
    sigma, psi = random_pair(rng, 3)
    gen = build_gen_metric(sigma, psi, np.zeros(6))
    H = gen.H.value
    vp, vm = gen.eigenbundle_split()
    assert np.allclose(H @ vp, vp, atol=1e-12)
    assert np.allclose(H @ vm, -vm, atol=1e-12)
    assert np.allclose(vp, gen.iota(1), atol=1e-10)
    assert np.allclose(vm, gen.iota(-1), atol=1e-10)
    for _ in range(5):
        X = rng.normal(size=3)
        for sign in (1, -1):
            assert np.max(np.abs(H @ iota_pm(gen, X, sign) - sign * iota_pm(gen, X, sign))) <= 1e-12
        hp, hm = horizontal_iota(gen, X, 1), horizontal_iota(gen, X, -1)
        S = tangent_structure_matrix(3)
        Xa = np.r_[X, np.zeros(3)]
        assert np.max(np.abs(hp - hm - 2 * S @ Xa)) <= 1e-12
        assert np.max(np.abs(hp + hm - 2 * (Xa - S @ np.r_[gen.Q.value @ X, np.zeros(3)]))) <= 1e-12


def test_zero_psi_iota():
    gen = build_gen_metric(np.eye(2), np.zeros((2, 2)), np.zeros(4))
    X = np.array([1.0, 2.0])
    assert np.allclose(horizontal_iota(gen, X, 1), [1, 2, 1, 2])
    assert np.allclose(horizontal_iota(gen, X, -1), [1, 2, -1, -2])


def test_flat_sasaki_is_half_identity():
    zero = np.zeros((2, 2))
    gs = sasaki_metric(np.eye(2), zero, NonlinearConnection.flat(2), P)
    assert np.allclose(gs.G.value, 0.5 * np.eye(4))
    assert np.allclose(gs.H.value, paracomplex_matrix(2))
    assert np.allclose(gs.Phi.value, np.eye(4))


def test_sphere_sasaki_blocks():
    s, t = sphere_data()
    p = np.array([1.2, 0.3, -0.4, 0.6])
    gs = sasaki_metric(s, np.zeros((2, 2)), t, p)
    g = s.value(p)
    z = np.zeros((2, 2))
    assert np.allclose(gs.G.value, 0.5 * np.block([[g, z], [z, g]]))
    assert max(gs.block_residuals().values()) <= 1e-14
    assert max(gs.residuals().values()) <= 1e-12


def test_mixed_block_with_psi():
    psi = np.array([[0.0, 1.0], [-1.0, 0.0]])
    gs = sasaki_metric(np.eye(2), psi, NonlinearConnection.flat(2), P)
    G = gs.G.value
    assert np.max(np.abs(G[:2, 2:])) > 0.1
    assert max(gs.block_residuals().values()) <= 1e-14
    assert np.min(np.linalg.eigvalsh(G)) > 0


def test_sasaki_invariants_on_velocity_data(velocity_metric):
    assert max(velocity_metric.residuals().values()) <= 1e-12
    assert velocity_metric.neutral_signature() == (2, 2)


def test_neutral_metric_signature():
    w = np.linalg.eigvalsh(neutral_metric(3))
    assert np.sum(w > 0) == 3 and np.sum(w < 0) == 3


def test_identification_maps():
    rng = np.random.default_rng(4)
    sigma, _ = random_pair(rng, 2)
    maps = identification_maps(sigma)
    pairs = rng.normal(size=(10, 4))
    assert max(maps.residuals(pairs).values()) <= 1e-12
    flat = identification_maps(np.eye(2))
    assert set(np.unique(flat.i)) <= {0.0, 1.0}
    assert set(np.unique(flat.j)) <= {0.0, 1.0}


def test_projection_maps_are_consistent():
    maps = projection_maps(2)
    assert np.allclose(maps["pr_H"] + maps["pr_V"], np.eye(4))
    assert np.allclose(maps["S"] + maps["S_prime"], maps["P_H"])


def test_velocity_tensor_inputs_are_evaluated():
    sig = VelocityTensor.parse([["1+y1^2", "0"], ["0", "2"]], 2, "symmetric")
    psi = VelocityTensor.parse([["0", "x1"], ["-x1", "0"]], 2, "antisymmetric")
    gen = build_gen_metric(sig, psi, [0.5, 0.0, 1.0, 0.0], order=1)
    assert np.allclose(gen.sigma.value, np.diag([2.0, 2.0]))
    assert gen.Q.order == 1
