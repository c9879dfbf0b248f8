import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangent_forge import _kernels
from tangent_forge.expr import DomainError, parse
from tangent_forge.jets import (
    MAX_ORDER,
    Jet,
    JetOrderError,
    differentiate_field,
    eval_jet,
    jinv,
    monomials,
)
from tangent_forge.oracle import fd_derivative

from conftest import random_expression


def test_polynomial_example():
    j = eval_jet(parse("x1*y2"), [2, 3, 5, 7], 1)
    assert j.value == 14
    assert j.derivative((1, 0, 0, 0)) == 7
    assert j.derivative((0, 0, 0, 1)) == 2
    assert j.derivative((0, 1, 0, 0)) == 0 and j.derivative((0, 0, 1, 0)) == 0


def test_constant_has_no_derivatives():
    j = eval_jet(parse("1"), [0.1, 0.2, 0.3, 0.4], 4)
    assert j.value == 1
    assert np.all(j.coeffs[1:] == 0)


def test_sin_exp_matches_finite_differences():
    f = parse("sin(x1)*exp(y1)")
    p = [0.3, 0.4]
    j = eval_jet(f, p, 3)
    for a in itertools.product(range(4), repeat=2):
        if 0 < sum(a) <= 3:
            fd = fd_derivative(lambda z: f.evaluate(z), p, a)
            assert abs(j.derivative(a) - fd) <= 1e-6 * max(1.0, abs(fd))


def test_differentiate_field_shapes():
    eye = [[parse("1"), parse("0")], [parse("0"), parse("1")]]
    j = differentiate_field(eye, [0.1, 0.2, 0.3, 0.4], 2)
    assert j.shape == (2, 2)
    assert np.array_equal(j.value, np.eye(2))
    assert np.all(j.coeffs[..., 1:] == 0)
    s = differentiate_field([[parse("1+y1^2"), parse("0")], [parse("0"), parse("1+y1^2")]], [0, 0, 1, 0], 1)
    assert s.derivative((0, 0, 1, 0))[0, 0] == 2


def test_order_limits():
    with pytest.raises(JetOrderError):
        eval_jet(parse("x1"), [0.0, 0.0], MAX_ORDER + 1)
    j = eval_jet(parse("x1^2"), [1.0, 0.0], 1)
    with pytest.raises(JetOrderError):
        j.derivative((2, 0))


@pytest.mark.parametrize("text, point", [("log(x1)", [0.0, 1.0]), ("1/(x1-1)", [1.0, 0.0]),
                                         ("sqrt(y1)", [0.0, -1.0]), ("x1^0.5", [-1.0, 0.0])])
def test_domain_errors_name_the_node(text, point):
    with pytest.raises(DomainError) as err:
        eval_jet(parse(text), point, 2)
    assert "`" in str(err.value)


def _shifted_polynomial(rng, point):
    """Random polynomial of degree <= 4 in shifted variables with known Taylor coefficients."""
    n = len(point)
    names = [f"x{i + 1}" for i in range(n // 2)] + [f"y{i + 1}" for i in range(n // 2)]
    coeffs = {}
    terms = []
    for e in monomials(n, 4):
        if rng.random() < 0.4:
            c = float(rng.normal())
            coeffs[tuple(e)] = c
            factors = [f"({names[k]}-({float(point[k])!r}))^{int(e[k])}" for k in range(n) if e[k]]
            terms.append("*".join([repr(c)] + factors))
    return " + ".join(terms) or "0", coeffs


@pytest.mark.parametrize("seed", range(5))
def test_polynomial_exactness(seed):
    rng = np.random.default_rng(seed)
    point = rng.uniform(-1, 1, 4)
    text, coeffs = _shifted_polynomial(rng, point)
    j = eval_jet(parse(text), point, 4)
    for k, e in enumerate(monomials(4, 4)):
        want = coeffs.get(tuple(e), 0.0)
        assert abs(j.coeffs[k] - want) <= 1e-13 * max(1.0, abs(want))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_product_is_convolution(seed):
    rng = np.random.default_rng(seed)
    f, g = parse(random_expression(rng, 1, 2)), parse(random_expression(rng, 1, 2))
    p = rng.uniform(-0.5, 0.5, 2)
    jf, jg, jfg = eval_jet(f, p, 4), eval_jet(g, p, 4), eval_jet(f * g, p, 4)
    mon = monomials(2, 4)
    index = {tuple(e): k for k, e in enumerate(mon)}
    want = np.zeros_like(jfg.coeffs)
    for a, ea in enumerate(mon):
        for b, eb in enumerate(mon):
            e = tuple(ea + eb)
            if e in index:
                want[index[e]] += jf.coeffs[a] * jg.coeffs[b]
    assert np.allclose(jfg.coeffs, want, rtol=1e-12, atol=1e-12)


def test_matrix_inverse_jet():
    p = [0.2, -0.1, 0.4, 0.3]
    M = differentiate_field([[parse("2+x1"), parse("y1")], [parse("y1"), parse("3+x2*y2")]], p, 3)
    I = np.einsum("ijk,jl->ilk", jinv(M).coeffs[..., :1], M.value)[..., 0]
    assert np.allclose(I, np.eye(2))
    from tangent_forge.jets import jeinsum
    prod = jeinsum("ij,jk->ik", jinv(M), M)
    assert np.allclose(prod.coeffs[..., 0], np.eye(2)) and np.allclose(prod.coeffs[..., 1:], 0, atol=1e-13)


def test_backends_agree():
    f = parse("sin(x1*y1)/(2+x2^2)*exp(y2)")
    p = [0.3, -0.2, 0.5, 0.1]
    old = _kernels.BACKEND
    try:
        _kernels.set_backend("numpy")
        a = eval_jet(f, p, 4).coeffs
        if _kernels.HAVE_NUMBA:
            _kernels.set_backend("numba")
            b = eval_jet(f, p, 4).coeffs
            assert np.allclose(a, b, rtol=1e-13, atol=1e-14)
    finally:
        _kernels.set_backend(old)
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def test_jet_arithmetic_helpers():
    p = [0.5, 0.25]
    x = Jet.variable(0, p, 3)
    y = Jet.variable(1, p, 3)
    j = (x * y - 2 * x) / (1 + y)
    f = parse("(x1*y1-2*x1)/(1+y1)")
    assert np.allclose(j.coeffs, eval_jet(f, p, 3).coeffs)
    assert np.allclose(j.partial(0).value, j.derivative((1, 0)))
    assert j.truncate(1).order == 1


def test_env_flag_selects_numpy_backend():
    code = "from tangent_forge import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, TANGENT_FORGE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
