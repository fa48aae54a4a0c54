import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinx.errors import DomainError, OutOfRangeError
from steinx.extension import (
    build_context,
    build_partition,
    check_partition,
    delta_star,
    extend_rotated,
    extend_special,
    smoothstep,
)
from steinx.geometry import Constant, Rotation, SmoothAbs, disk_domain, special_domain
from steinx.harness.config import ExperimentConfig, parse_family
from steinx.harness.experiment import setup_domain
from steinx.kernel import build_kernel

BOX = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))


@pytest.fixture(scope="module")
def cone_ctx():
    dom = special_domain(SmoothAbs(1.0, 0.5))
    return build_context(dom, BOX, build_kernel(2.0, 3), max_depth=9, sample_count=4000)


@pytest.fixture(scope="module")
def flat_ctx():
    return build_context(special_domain(Constant(0.0)), BOX, build_kernel(2.0, 3), max_depth=9, sample_count=4000)


@pytest.fixture(scope="module")
def disk_setup():
    cfg = ExperimentConfig()
    return setup_domain(parse_family("disk"), cfg, build_kernel(cfg.lambda_max, cfg.moments))


def _exterior(ctx, count, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.2, 1.2, size=(4 * count, 2))
    pts = pts[~ctx.domain.contains(pts) & ctx.rd.admissible(pts)]
    return pts[:count]


def test_identity_inside(cone_ctx):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.5, 1.5, size=(500, 2))
    pts = pts[cone_ctx.domain.contains(pts)]
    f = lambda q: np.sin(q[:, 0]) * np.cos(q[:, 1])
    assert np.array_equal(extend_special(cone_ctx, f, pts), f(pts))


@settings(max_examples=25, deadline=None)
@given(c=st.lists(st.floats(-2, 2), min_size=4, max_size=4), kx=st.floats(0.2, 3))
def test_vertical_polynomials_reproduced(cone_ctx, c, kx):
    # moments up to K make the vertical average exact on polynomials of degree K in y
    pts = _exterior(cone_ctx, 40, 1)
    f = lambda q: np.cos(kx * q[:, 0]) * np.polyval(c, q[:, 1])
    assert np.allclose(extend_special(cone_ctx, f, pts), f(pts), rtol=1e-8, atol=1e-8)


def test_rotated_halfspace_reproduces_linear(flat_ctx):
    R = Rotation.planar(0.6)
    rng = np.random.default_rng(2)
    loc = np.column_stack([rng.uniform(-0.8, 0.8, 50), rng.uniform(-0.8, -0.1, 50)])
    pts = R.apply(loc)
    f = lambda q: 1.0 + 2.0 * q[:, 0] - q[:, 1]
    assert np.allclose(extend_rotated(flat_ctx, R, f, pts), f(pts), atol=1e-9)


def test_continuity_at_boundary(cone_ctx):
    f = lambda q: np.exp(q[:, 0]) + q[:, 1] ** 2
    x = np.linspace(-1, 1, 21)
    on = np.column_stack([x, cone_ctx.domain.graph(x[:, None])])
    errs = []
    for d in (0.2, 0.1, 0.05):
        errs.append(np.max(np.abs(extend_special(cone_ctx, f, on - [0, d]) - f(on))))
    assert errs[0] > errs[1] > errs[2]


def test_delta_star_clears_graph(cone_ctx):
    pts = _exterior(cone_ctx, 500, 3)
    assert np.all(delta_star(cone_ctx, pts) > cone_ctx.domain.gap(pts))


def test_unsupported_points(flat_ctx):
    far = np.array([[0.0, -10.0]])
    with pytest.raises(OutOfRangeError):
        extend_special(flat_ctx, lambda q: q[:, 0], far)
    assert math.isnan(extend_special(flat_ctx, lambda q: q[:, 0], far[0], unsupported="nan"))


def test_unknown_method():
    with pytest.raises(DomainError):
        build_context(special_domain(Constant(0.0)), BOX, method="other")


def test_mollified_context_reproduces_vertical_polynomials():
    dom = special_domain(SmoothAbs(1.0, 0.5))
    ctx = build_context(dom, BOX, build_kernel(2.0, 2), sample_count=2000, method="mollified")
    pts = _exterior(ctx, 50, 4)
    f = lambda q: q[:, 0] ** 3 * (1 + q[:, 1] - q[:, 1] ** 2)
    assert np.allclose(extend_special(ctx, f, pts), f(pts), atol=1e-8)


def test_smoothstep():
    assert np.array_equal(smoothstep([-1.0, 0.0, 1.0, 2.0]), [0.0, 0.0, 1.0, 1.0])
    assert smoothstep(0.5) == pytest.approx(0.5)
    t = np.linspace(0.01, 0.99, 50)
    assert np.all(np.diff(smoothstep(t)) > 0)


def test_partition_needs_ball_patches():
    with pytest.raises(DomainError):
        build_partition(disk_domain())


def test_disk_partition_invariants(disk_setup):
    rep = check_partition(disk_setup.pou, 4000, seed=5)
    assert rep.ok, rep
    assert rep.max_sum_error <= 1e-10


def test_disk_extension_identity_and_continuity(disk_setup):
    f = lambda q: np.exp(q[:, 0]) + q[:, 1] ** 2
    t = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    ring = np.column_stack([np.cos(t), np.sin(t)])
    assert np.allclose(disk_setup.extend(f, 0.9 * ring), f(0.9 * ring), atol=1e-12)
    errs = [np.max(np.abs(disk_setup.extend(f, r * ring) - f(ring))) for r in (1.001, 1.0001, 1.00001)]
    assert errs[2] <= 1e-4
    assert errs[0] > errs[1] > errs[2]


def test_disk_extension_vanishes_far_out(disk_setup):
    f = lambda q: np.ones(len(q))
    pts = np.array([[1.5, 0.0], [0.0, -1.4]])
    assert np.all(disk_setup.extend(f, pts) == 0.0)
