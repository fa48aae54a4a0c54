import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from steinx.errors import DomainError, OutOfRangeError, SamplingError, UnsupportedOrderError
from steinx.geometry import Constant, Sinusoid, SmoothAbs, special_domain
from steinx.regdist import (
    build_mollified_distance,
    build_regularized_distance,
    build_whitney,
    bump_1d,
    distance_to_closure,
    dump_cells_csv,
    estimate_constants,
    eval_delta,
    eval_delta_derivative,
    multi_indices,
    sample_exterior,
)

BOX = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))


@pytest.fixture(scope="module")
def flat():
    return build_regularized_distance(special_domain(Constant(0.0)), BOX, max_depth=8)


@pytest.fixture(scope="module")
def wavy():
    dom = special_domain(Sinusoid(0.5, (1.0,)))
    return dom, build_regularized_distance(dom, BOX, max_depth=8)


def test_halfspace_cells_below_and_ratio(flat):
    wd = flat.decomposition
    for c, s in wd.cells():
        assert c[1] + s / 2 <= 1e-12
    r = wd.whitney_ratios()
    assert r.min() >= 1 and r.max() <= 4


def test_sinusoid_cells_avoid_domain(wavy):
    dom, rd = wavy
    t = np.linspace(-0.5, 0.5, 33)
    for c, s in rd.decomposition.cells():
        top = np.column_stack([c[0] + s * t, np.full_like(t, c[1] + s / 2)])
        assert not dom.contains(top).any()


def test_whitney_ratio_bounds_sinusoid(wavy):
    r = wavy[1].decomposition.whitney_ratios()
    assert r.min() >= 1 and r.max() <= 4


def test_depth_refinement_stable():
    dom = special_domain(Constant(0.0))
    coarse = build_regularized_distance(dom, BOX, max_depth=4)
    fine = build_regularized_distance(dom, BOX, max_depth=8)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-0.4, 0.4, 100), rng.uniform(-0.7, -0.4, 100)])
    a, b = coarse.delta(pts), fine.delta(pts)
    assert np.max(np.abs(a - b) / b) <= 0.25


def test_depth_range():
    dom = special_domain(Constant(0.0))
    for depth in (3, 17):
        with pytest.raises(DomainError):
            build_regularized_distance(dom, BOX, max_depth=depth)


def test_box_inside_domain_rejected():
    dom = special_domain(Constant(0.0))
    with pytest.raises(DomainError, match="no exterior region"):
        build_regularized_distance(dom, (np.array([-1.0, 1.0]), np.array([1.0, 2.0])), max_depth=6)


def test_delta_between_constants(flat):
    C = estimate_constants(flat, sample_count=2000, seed=0)
    assert C.sample_count >= 1000
    assert C.c1 <= C.c2
    d = eval_delta(flat, np.array([0.0, -0.5]))
    assert C.c1 * 0.5 <= d <= C.c2 * 0.5
    assert eval_delta(flat, np.array([0.0, -0.25])) < d * C.c2 / C.c1


def test_delta_positive(flat):
    pts = sample_exterior(flat, 10**4, seed=3)
    assert len(pts) == 10**4
    assert np.all(flat.delta(pts) > 0)


def test_delta_rejects_closure_and_uncovered(flat):
    with pytest.raises(DomainError):
        eval_delta(flat, np.array([0.0, 0.5]))
    with pytest.raises(DomainError):
        eval_delta(flat, np.array([0.0, 0.0]))
    with pytest.raises(OutOfRangeError):
        eval_delta(flat, np.array([5.0, -0.5]))


def test_zero_order_derivative_is_delta(flat):
    pts = sample_exterior(flat, 50, seed=1)
    assert np.array_equal(flat.derivative(pts, (0, 0)), flat.delta(pts))


def test_first_derivatives_match_differences(flat):
    pts = sample_exterior(flat, 100, seed=2)
    pts = pts[pts[:, 1] < -0.1][:100]
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (flat.delta(pts + e) - flat.delta(pts - e)) / (2 * h)
        alpha = tuple(int(j == k) for j in range(2))
        assert np.max(np.abs(eval_delta_derivative(flat, pts, alpha) - fd)) <= 1e-4


def test_second_derivatives_bounded(flat):
    C = estimate_constants(flat, sample_count=4000, seed=5)
    rng = np.random.default_rng(6)
    d = rng.uniform(0.1, 0.6, 200)
    pts = np.column_stack([rng.uniform(-0.3, 0.3, 200), -d])
    for a in ((2, 0), (1, 1), (0, 2)):
        assert np.all(np.abs(flat.derivative(pts, a)) * d <= C.Border(2) * 1.5)


def test_order_above_four_unsupported(flat):
    with pytest.raises(UnsupportedOrderError):
        flat.derivative(np.array([[0.0, -0.5]]), (3, 2))


def test_gap_bound_on_fresh_sample(wavy):
    dom, rd = wavy
    C = estimate_constants(rd, sample_count=4000, seed=0)
    pts = sample_exterior(rd, 10**4, seed=11)
    assert np.all(C.c3 * rd.delta(pts) >= dom.gap(pts) * (1 - 1e-12))


def test_estimate_constants_sample_floor(flat):
    with pytest.raises(SamplingError):
        estimate_constants(flat, sample_count=999)


def test_distance_to_closure_against_dense_graph():
    dom = special_domain(Sinusoid(0.5, (1.0,)))
    x = np.linspace(-6, 6, 400001)
    tree = cKDTree(np.column_stack([x, 0.5 * np.sin(x)]))
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-1, 1, 200), rng.uniform(-1.5, -0.6, 200)])
    ref, _ = tree.query(pts)
    assert np.allclose(distance_to_closure(dom, pts), ref, atol=1e-4)


def test_distance_to_closure_halfspace_exact():
    dom = special_domain(Constant(0.0))
    pts = np.column_stack([np.linspace(-3, 3, 11), -np.linspace(0.1, 2, 11)])
    assert np.allclose(distance_to_closure(dom, pts), -pts[:, 1], atol=1e-12)


def test_bump_profile():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 1.5])
    assert np.allclose(bump_1d(t), [0.0, 1.0, 0.75**6, 0.0, 0.0])
    h = 1e-6
    s = np.linspace(-0.9, 0.9, 19)
    assert np.allclose(bump_1d(s, 1), (bump_1d(s + h) - bump_1d(s - h)) / (2 * h), atol=1e-6)


def test_multi_indices_count():
    assert len(multi_indices(2, 4)) == 15
    assert len(multi_indices(3, 2)) == 10


def test_cells_csv(flat, tmp_path):
    dump_cells_csv(flat, tmp_path / "cells.csv")
    arr = np.loadtxt(tmp_path / "cells.csv", delimiter=",")
    assert arr.shape == (flat.decomposition.cell_count, 3)


def test_whitney_covers_exterior_away_from_boundary():
    dom = special_domain(SmoothAbs(1.0, 0.5))
    wd = build_whitney(dom, [-1.5, -1.5], [1.5, 1.5], 8)
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1.4, 1.4, size=(5000, 2))
    pts = pts[dom.gap(pts) > 0.1]
    assert wd.covered(pts).all()


def test_mollified_halfspace_is_gap():
    dom = special_domain(Constant(0.0))
    md = build_mollified_distance(dom, BOX)
    pts = np.column_stack([np.zeros(5), -np.linspace(0.1, 1, 5)])
    assert np.array_equal(md.delta(pts), -pts[:, 1])


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-1, 1), depth=st.floats(0.01, 2))
def test_mollified_sandwich(x, depth):
    dom = special_domain(SmoothAbs(1.0, 0.5))
    md = build_mollified_distance(dom, (np.array([-1.5, -1.5]), np.array([1.5, 1.5])))
    p = np.array([[x, float(dom.graph(np.array([[x]]))[0]) - depth]])
    gap = dom.gap(p)[0]
    d = md.delta(p)[0]
    k = md.contraction
    assert gap / (1 + k) * (1 - 1e-9) <= d <= gap / (1 - k) * (1 + 1e-9)
    assert dom.gap(p)[0] <= md.c3_bound * d * (1 + 1e-9)
