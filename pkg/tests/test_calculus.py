import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from steinx.calculus import (
    ConeMollifier,
    DerivativeTable,
    SymbolicFunction,
    enumerate_chain_terms,
    eval_chain_expansion,
    fd_derivative,
    fd_weights,
    grid_derivative,
    mollify,
)
from steinx.errors import DomainError, OutOfRangeError, UnsupportedOrderError
from steinx.grid import sample_field

X, Y = sympy.symbols("x1 x2")
F_EXPR = sympy.sin(X) * sympy.exp(Y / 2) + X**2 * Y**3
H_EXPR = sympy.cos(X + 2 * Y) + X * Y
LAM = 0.7


def _direct(alpha, pts):
    # differentiate f(x, y + lam h(x, y)) symbolically in one go
    comp = F_EXPR.subs(Y, Y + LAM * H_EXPR, simultaneous=True)
    for s, k in zip((X, Y), alpha):
        if k:
            comp = sympy.diff(comp, s, k)
    return sympy.lambdify((X, Y), comp, "numpy")(pts[:, 0], pts[:, 1])


def test_first_order_terms():
    terms = enumerate_chain_terms((1, 0))
    assert [(t.s, t.beta, t.factors) for t in terms] == [(0, (1, 0), ()), (1, (0, 1), (((1, 0), 1),))]
    assert all(t.c == 1 for t in terms)


@pytest.mark.parametrize("alpha", [(0, 1), (1, 1), (2, 0), (0, 3), (2, 2), (1, 3), (4, 0)])
def test_expansion_matches_symbolic_composite(alpha):
    pts = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
    f, h = SymbolicFunction(F_EXPR, 2), SymbolicFunction(H_EXPR, 2)
    got = eval_chain_expansion(enumerate_chain_terms(alpha), f, h, LAM, pts)
    ref = _direct(alpha, pts)
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-10)


def test_order_and_lambda_invariants():
    for a in [(0, 0, 1), (1, 2, 1), (2, 0, 2), (0, 1, 3)]:
        terms = enumerate_chain_terms(a)
        for t in terms:
            t.check(a)
        assert len({(t.s, t.beta, t.factors) for t in terms}) == len(terms)


def test_chain_argument_errors():
    with pytest.raises(UnsupportedOrderError):
        enumerate_chain_terms((3, 2))
    with pytest.raises(DomainError):
        enumerate_chain_terms((1,))
    with pytest.raises(DomainError):
        enumerate_chain_terms((-1, 1))


def test_derivative_table_lookup():
    tab = DerivativeTable({(0, 0): lambda p: p[:, 0], (1, 0): lambda p: 1.0}, 2)
    assert np.array_equal(tab.derivative((1, 0), np.zeros((3, 2))), np.ones(3))
    with pytest.raises(UnsupportedOrderError):
        tab.derivative((0, 1), np.zeros((1, 2)))


def test_classic_weights():
    assert np.allclose(fd_weights(0.0, [-1, 0, 1], 2), [1, -2, 1])
    assert np.allclose(fd_weights(0.0, [-2, -1, 0, 1, 2], 1), [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    assert np.allclose(fd_weights(0.0, [0, 1, 2], 1), [-1.5, 2, -0.5])


@settings(max_examples=40, deadline=None)
@given(deg=st.integers(0, 3), ax=st.integers(0, 1), m=st.integers(1, 2), seed=st.integers(0, 1000))
def test_fd_exact_on_low_degree_polynomials(deg, ax, m, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=deg + 1)
    f = lambda p: np.polyval(c, p[:, ax])
    alpha = tuple(m if k == ax else 0 for k in range(2))
    x = rng.uniform(-1, 1, size=(5, 2))
    ref = np.polyval(np.polyder(c, m), x[:, ax]) if deg >= m else np.zeros(5)
    got = fd_derivative(f, alpha, x, 0.1, accuracy=4)
    assert np.allclose(got, ref, atol=1e-8 * max(1, np.abs(c).max()))


def test_fd_constant_is_exactly_zero():
    x = np.random.default_rng(1).uniform(-1, 1, size=(10, 2))
    assert np.all(fd_derivative(lambda p: np.full(len(p), 3.7), (1, 1), x, 1e-3, accuracy=4) == 0.0)


def test_fd_one_sided_near_bounds():
    x = np.array([[0.0, 0.5], [0.99, 0.5]])
    f = lambda p: np.exp(p[:, 0])
    got = fd_derivative(f, (1, 0), x, 1e-3, accuracy=4, bounds=([0, 0], [1, 1]))
    assert np.allclose(got, np.exp(x[:, 0]), rtol=1e-8)


def test_fd_bad_arguments():
    with pytest.raises(DomainError):
        fd_derivative(lambda p: p[:, 0], (1, 0), np.zeros((1, 2)), 0.0)
    with pytest.raises(DomainError):
        fd_derivative(lambda p: p[:, 0], (1,), np.zeros((1, 2)), 0.1)


def test_grid_derivative_polynomial_and_mask():
    F = sample_field(lambda p: p[:, 0] ** 3 + p[:, 0] * p[:, 1], [-1, -1], [1, 1], 32)
    mask = F.mask.copy()
    mask[10, 10] = False
    F = F.with_values(F.values, mask)
    D = grid_derivative(F, (1, 0), accuracy=4)
    P = F.points()
    ref = (3 * P[:, 0] ** 2 + P[:, 1]).reshape(F.shape)
    assert np.allclose(D.values[D.mask], ref[D.mask], atol=1e-10)
    assert not D.mask[10, 10] and not D.mask[8, 10] and D.mask[10, 9]
    assert D.mask.sum() < F.mask.sum()


def test_cone_mollifier_mass_and_support():
    m = ConeMollifier(1.0, 0.1)
    assert np.sum(m.weights) == pytest.approx(1.0, abs=1e-14)
    assert m.in_cone(m.nodes).all()
    lo, hi = m.support_box()
    assert np.all(m.nodes >= lo) and np.all(m.nodes <= hi)
    assert m.y_moment() == pytest.approx(-1.0, abs=1e-12)
    assert m.eta(np.array([[0.0, 0.5]]))[0] == 0.0


def test_cone_mollifier_rejects_bad_eps():
    with pytest.raises(DomainError):
        ConeMollifier(1.0, 0.0)


def test_mollify_reproduces_linear_functions():
    m = ConeMollifier(0.5, 0.2)
    x = np.random.default_rng(2).uniform(-1, 1, size=(30, 2))
    f = lambda p: 2 * p[:, 0] - 3 * p[:, 1] + 1
    # symmetric in zbar, so only the y shift survives
    assert np.allclose(mollify(f, m, x), f(x) + 3 * m.eps * m.y_moment(), atol=1e-12)


def test_mollify_checks_domain():
    from steinx.geometry import Constant, special_domain

    dom = special_domain(Constant(0.0))
    m = ConeMollifier(1.0, 0.1)
    assert np.isfinite(mollify(lambda p: p[:, 1], m, np.array([[0.0, 0.05]]), domain=dom)).all()
    with pytest.raises(OutOfRangeError):
        mollify(lambda p: p[:, 1], m, np.array([[0.0, -0.5]]), domain=dom)
