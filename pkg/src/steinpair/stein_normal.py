"""Normal Stein equation for Gaussian-smoothed half-line indicators.

For h = 1(-inf, z] and smoothing radius t, the test function is
h_t(x) = E h(x + tZ) = Phi((z - x)/t), and f solves

    f'(x) - x f(x) = h_t(x) - E h_t(Z).

f is evaluated from its integral representation, written in the one-sided
form that keeps the Gaussian weight bounded for each sign of x:

    x <= 0:  f(x) =  int_0^inf exp(x s - s^2/2) (h_t(x - s) - E h_t) ds
    x >  0:  f(x) = -int_0^inf exp(-x s - s^2/2) (h_t(x + s) - E h_t) ds
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .couplings import ExactPairCoupling, RegressionDecomposition, conditional_V2
from .numerics import DEFAULT_TAU, QuadratureSpec, ndtr, std_normal_pdf

CLASS_CONSTANT = math.sqrt(2.0 / math.pi)

# sup-norm constants for the smoothed Stein solution
F_NORM = 2.6
FPRIME_NORM = 4.0
FSECOND_COEF = 1.6

_S_MAX = 12.0  # exp(-S^2/2) ~ 5e-32
_S_NODES = 10
_CHUNK = 2048


@dataclass(frozen=True)
class SmoothedHalfLineTest:
    z: float
    t: float
    a: float = CLASS_CONSTANT

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"smoothing radius t must be positive, got {self.t!r}")
        if self.a != CLASS_CONSTANT:
            raise ValueError("the half-line class constant is fixed to sqrt(2/pi)")


def h_t_eval(test: SmoothedHalfLineTest, x):
    return ndtr((test.z - np.asarray(x, dtype=float)) / test.t)


def h_t_prime(test: SmoothedHalfLineTest, x):
    return -std_normal_pdf((test.z - np.asarray(x, dtype=float)) / test.t) / test.t


def expected_h_t(test: SmoothedHalfLineTest) -> float:
    # x + tZ' is N(0, 1 + t^2) when x ~ N(0, 1)
    return float(ndtr(test.z / math.sqrt(1.0 + test.t**2)))


@lru_cache(maxsize=64)
def _s_rule(t: float):
    width = min(0.25, t / 2.0)
    panels = int(math.ceil(_S_MAX / width))
    x, w = leggauss(_S_NODES)
    edges = np.linspace(0.0, _S_MAX, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


@dataclass(frozen=True)
class NormalSteinSolution:
    """Bounded solution f of the smoothed Stein equation, with f', f'' and G = int_0 f."""

    test: SmoothedHalfLineTest
    expected_h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "expected_h", expected_h_t(self.test))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for lo in range(0, len(flat), _CHUNK):
            out[lo:lo + _CHUNK] = self._f_block(flat[lo:lo + _CHUNK])
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def _f_block(self, x):
        s, ws = _s_rule(self.test.t)
        z, t, eh = self.test.z, self.test.t, self.expected_h
        out = np.empty_like(x)
        neg = x <= 0
        xn = x[neg][:, None]
        out[neg] = (np.exp(xn * s - 0.5 * s * s) * (ndtr((z - xn + s) / t) - eh)) @ ws
        xp = x[~neg][:, None]
        out[~neg] = -(np.exp(-xp * s - 0.5 * s * s) * (ndtr((z - xp - s) / t) - eh)) @ ws
        return out

    def derivs(self, x, fx=None):
        """(f'(x), f''(x)) read off the Stein equation and its derivative."""
        x = np.asarray(x, dtype=float)
        fx = self.f(x) if fx is None else fx
        f1 = x * fx + h_t_eval(self.test, x) - self.expected_h
        f2 = fx + x * f1 + h_t_prime(self.test, x)
        return f1, f2

    def fprime(self, x):
        return self.derivs(x)[0]

    def fsecond(self, x):
        return self.derivs(x)[1]

    def G(self, w):
        """int_0^w f(x) dx by composite Gauss-Legendre."""
        w = np.asarray(w, dtype=float)
        flat = w.ravel()
        width = min(0.25, self.test.t / 2.0)
        gx, gw = leggauss(_S_NODES)
        out = np.zeros_like(flat)
        for n, b in enumerate(flat):
            if b == 0.0:
                continue
            panels = int(math.ceil(abs(b) / width))
            edges = np.linspace(0.0, b, panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            nodes = (mid[:, None] + half[:, None] * gx).ravel()
            weights = (half[:, None] * gw).ravel()
            out[n] = weights @ self.f(nodes)
        return out.reshape(w.shape) if w.ndim else float(out[0])


@lru_cache(maxsize=256)
def solution_for(z: float, t: float) -> NormalSteinSolution:
    return NormalSteinSolution(SmoothedHalfLineTest(z, t))


def stein_solution(test: SmoothedHalfLineTest, x):
    return solution_for(test.z, test.t).f(x)


def stein_derivs(test: SmoothedHalfLineTest, x):
    return solution_for(test.z, test.t).derivs(x)


def G_eval(test: SmoothedHalfLineTest, w):
    return solution_for(test.z, test.t).G(w)


def certification_grid(lo: float = -8.0, hi: float = 8.0, step: float = 0.01) -> np.ndarray:
    return np.round(np.linspace(lo, hi, int(round((hi - lo) / step)) + 1), 12)


@dataclass(frozen=True)
class SolutionCertificate:
    z: float
    t: float
    residual: float  # max |f' - x f - (h_t - E h_t)| with f' by 5-point differences
    f_norm: float
    fprime_norm: float
    fsecond_norm: float

    @property
    def passed(self) -> bool:
        return (
            self.residual <= 1e-8
            and self.f_norm <= F_NORM
            and self.fprime_norm <= FPRIME_NORM
            and self.fsecond_norm <= FSECOND_COEF / self.t
        )


def certify_solution(test: SmoothedHalfLineTest, grid=None, h: float = 1e-3) -> SolutionCertificate:
    """Check the Stein equation and the sup-norm bounds of f, f', f'' on a grid.

    The residual uses a fourth-order central difference of f, so it checks the
    quadrature for f independently of the closed-form derivative.
    """
    sol = solution_for(test.z, test.t)
    x = certification_grid() if grid is None else np.asarray(grid, dtype=float)
    stencil = sol.f(x[:, None] + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
    fx = stencil[:, 2]
    fd = (stencil[:, 0] - 8.0 * stencil[:, 1] + 8.0 * stencil[:, 3] - stencil[:, 4]) / (12.0 * h)
    rhs = h_t_eval(test, x) - sol.expected_h
    f1, f2 = sol.derivs(x, fx)
    return SolutionCertificate(
        z=test.z,
        t=test.t,
        residual=float(np.max(np.abs(fd - x * fx - rhs))),
        f_norm=float(np.max(np.abs(fx))),
        fprime_norm=float(np.max(np.abs(f1))),
        fsecond_norm=float(np.max(np.abs(f2))),
    )


def ef_zero_check(c: ExactPairCoupling, test: SmoothedHalfLineTest, variant: str = "integral_form") -> float:
    """E F(W, W') for the product-form or the integral-form antisymmetric F."""
    sol = solution_for(test.z, test.t)
    if variant == "integral_form":
        G = sol.G(c.values)
        return c.expect(lambda w, wp: G[None, :] - G[:, None])
    if variant == "product_form":
        fv = sol.f(c.values)
        return c.expect(lambda w, wp: (wp - w) * (fv[None, :] + fv[:, None]))
    raise ValueError(f"unknown variant {variant!r}")


def _tau_expectation(c: ExactPairCoupling, sol: NormalSteinSolution, weight, tau_spec: QuadratureSpec) -> float:
    """E{V^3 weight(tau) f''(W + tau V)} with tau ~ U[0, 1] integrated by quadrature."""
    V = c.displacement()
    k, j = np.nonzero((c.joint > 0) & (V != 0))
    if len(k) == 0:
        return 0.0
    tau, tw = tau_spec.nodes_weights(0.0, 1.0)
    v = V[k, j]
    pts = c.values[k][:, None] + tau[None, :] * v[:, None]
    f2 = sol.fsecond(pts)
    inner = f2 @ (tw * weight(tau))
    return float(np.sum(c.joint[k, j] * v**3 * inner))


def remainder_terms(c: ExactPairCoupling, test: SmoothedHalfLineTest, tau_spec: QuadratureSpec = DEFAULT_TAU):
    """E{V^3 (1-tau) f''(W+tau V)} and E{V^3 (1-tau)^2 f''(W+tau V)}."""
    sol = solution_for(test.z, test.t)
    return (
        _tau_expectation(c, sol, lambda u: 1.0 - u, tau_spec),
        _tau_expectation(c, sol, lambda u: (1.0 - u) ** 2, tau_spec),
    )


def remainder_split_term(c: ExactPairCoupling, test: SmoothedHalfLineTest, tau_spec: QuadratureSpec = DEFAULT_TAU) -> float:
    """E{V^3 tau (1 - tau) f''(W + tau V)}; zero for exchangeable pairs."""
    sol = solution_for(test.z, test.t)
    return _tau_expectation(c, sol, lambda u: u * (1.0 - u), tau_spec)


@dataclass(frozen=True)
class NormalIdentityReport:
    z: float
    t: float
    lhs: float  # lam E{W f(W)}
    term_V2: float  # 1/2 E{V^2 f'(W)}
    term_remainder: float  # 1/2 E{V^3 (1-tau)^2 f''(W + tau V)}
    term_R: float  # E{R f(W)}
    residual: float
    smoothed_gap: float  # lam (E h_t(W) - E h_t(Z))
    J1: float
    J2: float
    J3: float
    decomposition_residual: float  # smoothed_gap - (J1 + J2 - J3/2)
    J1_bound: float
    J2_bound: float
    J3_bound: float

    @property
    def J_bounds_hold(self) -> bool:
        eps = 1e-12
        return (
            abs(self.J1) <= self.J1_bound + eps
            and abs(self.J2) <= self.J2_bound + eps
            and abs(self.J3) <= self.J3_bound + eps
        )


def identity_2_11_check(
    c: ExactPairCoupling,
    d: RegressionDecomposition,
    test: SmoothedHalfLineTest,
    tau_spec: QuadratureSpec = DEFAULT_TAU,
) -> NormalIdentityReport:
    """Evaluate every term of the exchangeability-free regression identity

        lam E{W f(W)} = 1/2 E{V^2 f'(W)} + 1/2 E{V^3 (1-tau)^2 f''(W+tau V)} + E{R f(W)}

    together with the J1 + J2 - J3/2 split of lam (E h_t(W) - E h_t(Z)).
    """
    sol = solution_for(test.z, test.t)
    p = c.probs
    w = c.values
    fw = sol.f(w)
    f1w, _ = sol.derivs(w, fw)
    mom = conditional_V2(c, d)

    lhs = d.lam * float((w * fw) @ p)
    term_V2 = 0.5 * float((mom.EW_V2 * f1w) @ p)
    J3 = _tau_expectation(c, sol, lambda u: (1.0 - u) ** 2, tau_spec)
    term_R = float((d.R * fw) @ p)
    residual = lhs - (term_V2 + 0.5 * J3 + term_R)

    smoothed_gap = d.lam * (float(h_t_eval(test, w) @ p) - sol.expected_h)
    J1 = float((((d.lam - d.alpha) - 0.5 * mom.EW_V2) * f1w) @ p)
    J2 = float((d.alpha * f1w - d.R * fw) @ p)
    return NormalIdentityReport(
        z=test.z,
        t=test.t,
        lhs=lhs,
        term_V2=term_V2,
        term_remainder=0.5 * J3,
        term_R=term_R,
        residual=residual,
        smoothed_gap=smoothed_gap,
        J1=J1,
        J2=J2,
        J3=J3,
        decomposition_residual=smoothed_gap - (J1 + J2 - 0.5 * J3),
        J1_bound=2.0 * math.sqrt(mom.var_EWV2),
        J2_bound=(F_NORM + FPRIME_NORM) * math.sqrt(d.ER2),
        J3_bound=FSECOND_COEF / (3.0 * test.t) * mom.E_absV3,
    )
