import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinx.errors import DimensionError, DomainError, SamplingError
from steinx.geometry import (
    Arc,
    Ball,
    BallUnionPatch,
    BoxPatch,
    Constant,
    LipschitzGraph,
    MinimallySmoothDomain,
    Patch,
    PiecewiseLinear,
    Rotation,
    Sinusoid,
    SmoothAbs,
    active_indices,
    contains,
    cover_by_balls,
    disk_domain,
    lattice_bound,
    point_set_diameter,
    read_points_csv,
    regularize_covering,
    special_domain,
    write_points_csv,
    xi_bound,
)

# mpmath: sqrt(4 + 0.1^2) - 0.1
PSI_SMOOTHABS_AT_2 = 1.9024984394500786


def test_contains_half_space():
    dom = special_domain(Constant(0.0))
    assert contains(dom, np.array([0.0, 1.0])) is True
    assert contains(dom, np.array([0.0, 0.0])) is False


def test_contains_smoothed_cone():
    psi = SmoothAbs(1.0, 0.1)
    assert psi(np.array([[2.0]]))[0] == pytest.approx(PSI_SMOOTHABS_AT_2, abs=1e-14)
    assert contains(special_domain(psi), np.array([2.0, 1.0])) is False


def test_contains_dimension_mismatch():
    with pytest.raises(DimensionError):
        special_domain(Constant(0.0)).contains(np.array([[0.0, 1.0, 2.0]]))


def test_lipschitz_violation_detected():
    with pytest.raises(DomainError):
        LipschitzGraph(Sinusoid(1.0, (3.0,)), 1.0)


def test_lipschitz_constants():
    assert Sinusoid(0.5, (1.0,)).lipschitz == 0.5
    assert SmoothAbs(2.0, 0.3).lipschitz == 2.0
    assert PiecewiseLinear((0.0, 1.0, 3.0), (0.0, 2.0, 1.0)).lipschitz == 2.0
    assert Arc(1.0, 0.6).lipschitz == pytest.approx(0.75)


def test_graph_gradients_match_differences():
    x = np.linspace(-2, 2, 41)[:, None]
    for psi in (SmoothAbs(1.0, 0.5), Sinusoid(0.5, (1.3,), 0.2), Arc(1.0, 0.9)):
        h = 1e-6
        fd = (psi(x + h) - psi(x - h)) / (2 * h)
        assert np.allclose(psi.grad(x)[:, 0], fd, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(-10, 10), pts=st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
                                              min_size=1, max_size=20))
def test_rotation_round_trip(theta, pts):
    R = Rotation.planar(theta)
    p = np.array(pts)
    assert np.allclose(R.inverse(R.apply(p)), p, rtol=0, atol=1e-12 * max(1.0, np.abs(p).max()))


def test_rotation_rejects_reflection():
    with pytest.raises(DomainError):
        Rotation(np.diag([1.0, -1.0]))


def test_ball_radius_positive():
    with pytest.raises(DomainError):
        Ball(np.zeros(2), 0.0)


def test_cover_two_points():
    cover = cover_by_balls(np.array([[0.0, 0.0], [1.0, 0.0]]), 2)
    assert lattice_bound(2, 2) == 16
    assert cover.count <= 16
    assert all(b.radius == pytest.approx(0.5) for b in cover.balls)


def test_cover_singleton_plus_epsilon():
    pts = np.array([[0.3, 0.3], [0.3, 0.3 + 1e-9]])
    assert cover_by_balls(pts, 1).count == 1


def test_cover_degenerate_set():
    cover = cover_by_balls(np.array([[1.0, 2.0], [1.0, 2.0]]), 3)
    assert cover.count == 1 and cover.covers(np.array([[1.0, 2.0]])).all()


def test_cover_unit_square():
    pts = np.random.default_rng(3).uniform(0, 1, size=(100, 2))
    cover = cover_by_balls(pts, 3)
    assert lattice_bound(2, 3) == 36
    assert cover.count <= 36
    assert cover.covers(pts).all()
    centers = {tuple(b.center) for b in cover.balls}
    assert centers <= {tuple(p) for p in pts}


@settings(max_examples=40, deadline=None)
@given(n=st.sampled_from([2, 3]), k=st.integers(1, 3), seed=st.integers(0, 10**6), m=st.integers(2, 150))
def test_cover_property(n, k, seed, m):
    pts = np.random.default_rng(seed).normal(size=(m, n))
    cover = cover_by_balls(pts, k)
    assert cover.covers(pts).all()
    assert cover.count <= lattice_bound(n, k)
    assert all(b.radius == pytest.approx(point_set_diameter(pts) / k) for b in cover.balls)


def test_regularize_single_box_patch():
    dom = disk_domain()
    big = Patch(BoxPatch([-5, -5], [5, 5]), Rotation.identity(), dom.patches[0].domain)
    msd = dataclasses.replace(dom, patches=(big,))
    b = dom.sample_boundary(64)
    reg = regularize_covering(msd, b)
    assert len(reg.patches) == 1
    assert isinstance(reg.patches[0].U, BallUnionPatch)
    assert len(reg.patches[0].U.centers) == 64
    assert (reg.eps, reg.N, reg.M) == (msd.eps, msd.N, msd.M)


def test_regularize_drops_empty_patch():
    dom = disk_domain()
    tiny = Patch(BoxPatch([10, 10], [10.1, 10.1]), Rotation.identity(), dom.patches[0].domain)
    msd = dataclasses.replace(dom, patches=dom.patches + (tiny,))
    reg = regularize_covering(msd, dom.sample_boundary(256))
    assert len(reg.patches) == 4


def test_regularize_needs_boundary_points():
    dom = disk_domain()
    with pytest.raises(SamplingError):
        regularize_covering(dom, np.zeros((0, 2)))


def test_regularized_disk_multiplicity_and_eps_balls():
    dom = disk_domain()
    b = dom.sample_boundary(64)
    reg = regularize_covering(dom, b)
    probes = np.random.default_rng(0).uniform(-1.6, 1.6, size=(10**4, 2))
    assert reg.multiplicity(probes).max() <= reg.N
    rng = np.random.default_rng(1)
    for p in reg.patches:
        lo, hi = p.U.bounds()
        q = rng.uniform(lo, hi, size=(4000, 2))
        q = q[p.U.contains(q)][:1000]
        assert p.U.has_eps_ball(q, reg.eps).all()
    # the eps-ball property holds at the generating boundary points
    report = reg.validate(b, probes)
    assert report.ok, report


def _three_ball_domain():
    dom = disk_domain()
    D = dom.patches[0].domain
    patches = tuple(Patch(BallUnionPatch(np.array([[3.0 * i, 0.0]]), 1.0), Rotation.identity(), D) for i in range(3))
    return dataclasses.replace(dom, patches=patches)


def test_active_indices_disjoint_patches():
    msd = _three_ball_domain()
    assert active_indices(msd, Ball(np.array([3.0, 0.1]), 0.2)) == [1]
    assert active_indices(msd, Ball(np.array([1.5, 5.0]), 0.2)) == []


def test_xi_closed_form_unit_disk():
    # N |Omega^eps| / (eps^2 pi) with |Omega^eps| = pi (1 + eps)^2
    msd = dataclasses.replace(disk_domain(eps=0.5), N=4)
    est = xi_bound(msd, 10**6, seed=0)
    assert abs(est.volume - math.pi * 1.5**2) <= 3 * est.stderr
    assert abs(est.xi - 36.0) <= 3 * est.stderr * 4 / (0.25 * math.pi)


def test_xi_bounds_active_patches():
    msd = regularize_covering(disk_domain())
    est = xi_bound(msd, 200000, seed=2)
    rng = np.random.default_rng(4)
    lo, hi = msd.bounds(margin=msd.eps)
    for _ in range(100):
        b = Ball(rng.uniform(lo, hi), float(rng.uniform(0.01, 1.0)))
        assert len(active_indices(msd, b)) <= est.xi_upper


def test_points_csv_round_trip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(7, 3))
    write_points_csv(tmp_path / "p.csv", pts)
    assert np.array_equal(read_points_csv(tmp_path / "p.csv"), pts)


def test_msd_without_sampler():
    dom = disk_domain()
    msd = MinimallySmoothDomain(dom.patches, dom.eps, dom.N, dom.M, dom.membership)
    with pytest.raises(SamplingError):
        msd.sample_boundary(4)
