"""Compactly supported weight with unit mass and vanishing moments.

The weight is ``tau(lam) = w(lam) * P(lam)`` on [1, lam_max] and zero beyond,
where ``w`` is a bump flat to all orders at both endpoints and ``P`` is a
polynomial of degree K.  The defining conditions

    int tau = 1,    int lam**k tau = 0   (k = 1..K)

say that ``int tau * q = q(0)`` for every polynomial ``q`` of degree <= K.
We impose them against a Legendre test basis in the variable mapped to
[-1, 1], which turns the moment system into a symmetric Gram system with
right-hand side ``L_i(t(0))``.  The solution is identical to the monomial
formulation but far better conditioned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import mpmath
import numpy as np
from numpy.polynomial import legendre

from .errors import DomainError, IllConditionedError
from .quadrature import adaptive_gauss_legendre, composite_rule

MASS_TOL = 1e-10
MOMENT_TOL = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True)
class MomentKernel:
    lambda_max: float
    K: int
    coeffs: tuple[float, ...]
    condition: float = field(default=float("nan"), compare=False)
    verified_moments: tuple[float, ...] = field(default=(), compare=False)

    def to_unit(self, lam):
        return (2.0 * np.asarray(lam, dtype=float) - 1.0 - self.lambda_max) / (self.lambda_max - 1.0)

    def window(self, lam):
        lam = np.asarray(lam, dtype=float)
        L = self.lambda_max
        out = np.zeros_like(lam)
        inside = (lam > 1.0) & (lam < L)
        li = lam[inside]
        out[inside] = np.exp(-1.0 / (li - 1.0) - 1.0 / (L - li) + 4.0 / (L - 1.0))
        return out

    def polynomial(self, lam):
        return legendre.legval(self.to_unit(lam), np.asarray(self.coeffs))

    def __call__(self, lam):
        return eval_kernel(self, lam)

    def rule(self, panels: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes on [1, lam_max] with tau folded into the weights."""
        return _rule(self, panels, order)


def _window_scalar(lam: float, L: float) -> float:
    return float(np.exp(-1.0 / (lam - 1.0) - 1.0 / (L - lam) + 4.0 / (L - 1.0)))


def build_kernel(lambda_max: float, K: int) -> MomentKernel:
    """Solve for the K+1 polynomial coefficients and verify the moments.

    Raises IllConditionedError when the Gram system is too ill-conditioned or
    when the verified moments miss their tolerances (both happen for large K
    with lam_max close to 1, where the kernel's L1 norm explodes).
    """
    return _build_kernel(float(lambda_max), int(K))


@lru_cache(maxsize=32)
def _build_kernel(L: float, K: int) -> MomentKernel:
    if not (1.0 < L <= 10.0):
        raise DomainError(f"lambda_max must lie in (1, 10], got {L}")
    if not (1 <= K <= 8):
        raise DomainError(f"K must lie in [1, 8], got {K}")

    def gram_integrand(lam):
        t = (2.0 * lam - 1.0 - L) / (L - 1.0)
        V = legendre.legvander(t, K)
        w = np.zeros_like(lam)
        inside = (lam > 1.0) & (lam < L)
        li = lam[inside]
        w[inside] = np.exp(-1.0 / (li - 1.0) - 1.0 / (L - li) + 4.0 / (L - 1.0))
        return (w[:, None, None] * V[:, :, None] * V[:, None, :]).reshape(lam.size, -1)

    G, _ = adaptive_gauss_legendre(gram_integrand, 1.0, L, tol=1e-12, max_levels=20)
    G = np.asarray(G).reshape(K + 1, K + 1)
    t0 = -(1.0 + L) / (L - 1.0)
    rhs = legendre.legvander(np.array([t0]), K)[0]
    cond = float(np.linalg.cond(G)) * max(1.0, float(np.abs(rhs).max()))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(
            f"moment system condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}; "
            "use a smaller K or a larger lambda_max"
        )
    coeffs = np.linalg.solve(G, rhs)
    moments = _verify_moments(L, K, coeffs)
    bad_mass = abs(moments[0] - 1.0) > MASS_TOL
    bad_moment = any(abs(m) > MOMENT_TOL for m in moments[1:])
    if bad_mass or bad_moment:
        raise IllConditionedError(
            f"kernel (lambda_max={L}, K={K}) fails moment verification "
            f"(mass error {moments[0] - 1.0:.2e}, max moment {max(abs(m) for m in moments[1:]):.2e}); "
            "use a smaller K or a larger lambda_max"
        )
    return MomentKernel(L, K, tuple(float(c) for c in coeffs), cond, tuple(moments))


def _verify_moments(L: float, K: int, coeffs: np.ndarray) -> list[float]:
    # tanh-sinh at 32 digits, evaluating the float coefficients exactly
    with mpmath.workdps(32):
        cs = [mpmath.mpf(float(c)) for c in coeffs]
        Lm = mpmath.mpf(L)

        def tau(lam):
            t = (2 * lam - 1 - Lm) / (Lm - 1)
            p0, p1 = mpmath.mpf(1), t
            s = cs[0] + (cs[1] * p1 if K >= 1 else 0)
            for n in range(1, K):
                p0, p1 = p1, ((2 * n + 1) * t * p1 - n * p0) / (n + 1)
                s += cs[n + 1] * p1
            return mpmath.exp(-1 / (lam - 1) - 1 / (Lm - lam) + mpmath.mpf(4) / (Lm - 1)) * s

        pts = [mpmath.mpf(1), (1 + Lm) / 2, Lm]
        return [float(mpmath.quad(lambda lam: tau(lam) * lam**k, pts)) for k in range(K + 1)]


def eval_kernel(kernel: MomentKernel, lam):
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 1.0):
        raise DomainError("kernel is defined on [1, inf) only")
    out = kernel.window(lam_arr) * kernel.polynomial(lam_arr)
    return float(out) if out.ndim == 0 else out


def kernel_l1_norm(kernel: MomentKernel) -> float:
    """int |tau| over the support, integrating piecewise between sign changes."""
    roots = legendre.legroots(np.asarray(kernel.coeffs))
    roots = roots[np.isreal(roots)].real
    lam_roots = 1.0 + (roots + 1.0) * (kernel.lambda_max - 1.0) / 2.0
    value, _ = adaptive_gauss_legendre(
        lambda x: np.abs(eval_kernel(kernel, x)),
        1.0,
        kernel.lambda_max,
        tol=1e-12,
        breakpoints=tuple(lam_roots),
    )
    return float(value)


@lru_cache(maxsize=64)
def _rule(kernel: MomentKernel, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = composite_rule(1.0, kernel.lambda_max, panels, order)
    w = weights * eval_kernel(kernel, nodes)
    nodes.setflags(write=False)
    w.setflags(write=False)
    return nodes, w


def kernel_moments(kernel: MomentKernel, kmax: int, panels: int = 64) -> np.ndarray:
    """Moments int lam**k tau for k = 0..kmax by composite Gauss-Legendre."""
    nodes, w = kernel.rule(panels)
    return np.array([np.sum(w * nodes**k) for k in range(kmax + 1)])


def reproduction_residual(moments, k: int, y: float, c: float) -> float:
    """int (y + lam c)**k tau - y**k, expanded binomially in the given moments."""
    total = sum(comb(k, i) * y ** (k - i) * c**i * moments[i] for i in range(k + 1))
    return total - y**k
