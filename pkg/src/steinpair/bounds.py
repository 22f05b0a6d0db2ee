"""Normal (Kolmogorov) and Poisson (total variation) bounds evaluated term by term.

Poisson suprema over all Stein solutions f_A are realised exactly: the
functionals involved are linear in the indicator of A, so with s_j the value on
the singleton {j},

    sup_A |sum_{j in A} s_j| = max(sum_j max(s_j, 0), sum_j max(-s_j, 0)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .couplings import (
    CouplingError,
    ExactPairCoupling,
    JumpKernel,
    RegressionDecomposition,
    VMoments,
    jump_probabilities,
)
from .numerics import (
    ParameterError,
    TVInterval,
    kolmogorov_distance,
    std_normal_cdf,
    tv_distance_to_poisson,
)
from .stein_normal import CLASS_CONSTANT
from .stein_poisson import singleton_matrix, solve_poisson_stein

THEOREM_SLACK = 1e-12


def _check_lambda(lam):
    if not 0 < lam < 1:
        raise ParameterError(f"lambda = {lam!r} violates 0 < lambda < 1")


def normal_bound_2_4(lam, var_EWV2, ER2, E_absV3, a=CLASS_CONSTANT) -> float:
    _check_lambda(lam)
    if min(var_EWV2, ER2, E_absV3) < 0:
        raise ParameterError("moment inputs must be non-negative")
    return (
        6.0 / lam * math.sqrt(var_EWV2)
        + 19.0 * math.sqrt(ER2) / lam
        + 4.0 * math.sqrt(a * E_absV3 / lam)
    )


def normal_bound_2_5(lam, var_EWV2, ER2, A, observed_max_V: Optional[float] = None) -> float:
    _check_lambda(lam)
    if min(var_EWV2, ER2, A) < 0:
        raise ParameterError("moment inputs must be non-negative")
    if observed_max_V is not None and A < observed_max_V - 1e-12:
        raise ParameterError(f"A = {A!r} is below the observed max |W' - W| = {observed_max_V!r}")
    return (
        12.0 / lam * math.sqrt(var_EWV2)
        + 37.0 * math.sqrt(ER2) / lam
        + 32.0 * A**3 / lam
        + 6.0 * A**2 / math.sqrt(lam)
    )


def solve_delta_inequality(p: float, q: float) -> float:
    """Any delta >= 0 with delta <= p + q sqrt(delta) satisfies delta <= 2p + q^2."""
    if p < 0 or q < 0:
        raise ParameterError("p and q must be non-negative")
    return 2.0 * p + q * q


def normal_bound_2_5_derivation(lam, var_EWV2, ER2, A, a=CLASS_CONSTANT) -> float:
    """The bounded-jump bound with the a-dependent coefficients kept explicit.

    Closes delta <= p + q sqrt(delta) where
    p = (5.6 sqrt(var) + 18.5 sqrt(ER2)) / lam + 7 a A^3 / lam + 3 a A^2 / sqrt(lam)
    and q = 4.2 sqrt(a A^3 / lam).
    """
    _check_lambda(lam)
    p = (
        (5.6 * math.sqrt(var_EWV2) + 18.5 * math.sqrt(ER2)) / lam
        + 7.0 * a * A**3 / lam
        + 3.0 * a * A**2 / math.sqrt(lam)
    )
    q = 4.2 * math.sqrt(a * A**3 / lam)
    return solve_delta_inequality(p, q)


def delta_kolmogorov_actual(c: ExactPairCoupling) -> float:
    return kolmogorov_distance(c.marginal(), std_normal_cdf)


@dataclass(frozen=True)
class NormalBoundReport:
    lam: float
    ER2: float
    var_EWV2: float
    E_absV3: float
    A: Optional[float]
    a: float
    bound_2_4: float
    bound_2_5: Optional[float]
    bound_2_5_derivation: Optional[float]
    delta_actual: float
    slack_ratio: float

    @property
    def bound(self) -> float:
        return min(b for b in (self.bound_2_4, self.bound_2_5) if b is not None)

    @property
    def holds(self) -> bool:
        ok = self.bound_2_4 >= self.delta_actual
        if self.bound_2_5 is not None:
            ok = ok and self.bound_2_5 >= self.delta_actual
        return ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        return out


def normal_report(c: ExactPairCoupling, d: RegressionDecomposition, mom: VMoments,
                  A: Optional[float] = None, a: float = CLASS_CONSTANT) -> NormalBoundReport:
    """Both Kolmogorov bounds (the A-based one only when a jump bound is known) next to the exact delta."""
    b4 = normal_bound_2_4(d.lam, mom.var_EWV2, d.ER2, mom.E_absV3, a)
    b5 = b5d = None
    if A is not None:
        b5 = normal_bound_2_5(d.lam, mom.var_EWV2, d.ER2, A, observed_max_V=mom.A)
        b5d = normal_bound_2_5_derivation(d.lam, mom.var_EWV2, d.ER2, A, a)
    delta = delta_kolmogorov_actual(c)
    best = min(b for b in (b4, b5) if b is not None)
    return NormalBoundReport(
        lam=d.lam,
        ER2=d.ER2,
        var_EWV2=mom.var_EWV2,
        E_absV3=mom.E_absV3,
        A=A,
        a=a,
        bound_2_4=b4,
        bound_2_5=b5,
        bound_2_5_derivation=b5d,
        delta_actual=delta,
        slack_ratio=best / delta if delta > 0 else math.inf,
    )


# ---------------------------------------------------------------- Poisson side


@dataclass(frozen=True, eq=False)
class PoissonBasis:
    """Singleton Stein solutions f_{{j}} for j in {0..N}, known on {0..N+extra}."""

    lam: float
    N: int
    F: np.ndarray

    @classmethod
    def for_coupling(cls, c: ExactPairCoupling, lam: float, kernel: Optional[JumpKernel] = None):
        kernel = kernel or jump_probabilities(c)
        N = int(c.values.max())
        reach = max([1] + [abs(i) for i in kernel.displacements])
        return cls(lam, N, singleton_matrix(lam, N, extra=reach + 1))


def _sup_over_sets(s: np.ndarray) -> float:
    return float(max(np.clip(s, 0, None).sum(), np.clip(-s, 0, None).sum()))


def _check_integer_coupling(c: ExactPairCoupling):
    if not c.integer_valued or c.values.min() < 0:
        raise CouplingError("Poisson bounds need W on the non-negative integers")


def kappa_singletons(kernel: JumpKernel, lam: float, c_scale: float, basis: PoissonBasis) -> np.ndarray:
    """s_j = E{(c P_1(W) - lam) f_j(W+1) - (c P_{-1}(W) - W) f_j(W)} for every singleton j."""
    k = kernel.values.astype(int)
    up = kernel.probs * (c_scale * kernel.Pi(1) - lam)
    down = kernel.probs * (c_scale * kernel.Pi(-1) - kernel.values)
    return basis.F[:, k + 1] @ up - basis.F[:, k] @ down


def kappa_exact(c: ExactPairCoupling, kernel: JumpKernel, lam: float, c_scale: float,
                basis: PoissonBasis) -> float:
    _check_integer_coupling(c)
    return _sup_over_sets(kappa_singletons(kernel, lam, c_scale, basis))


def kappa_bruteforce(c: ExactPairCoupling, kernel: JumpKernel, lam: float, c_scale: float) -> float:
    """Maximise over every subset A of {0..N}, solving the Stein equation afresh for each."""
    _check_integer_coupling(c)
    N = int(c.values.max())
    k = kernel.values.astype(int)
    up = kernel.probs * (c_scale * kernel.Pi(1) - lam)
    down = kernel.probs * (c_scale * kernel.Pi(-1) - kernel.values)
    best = 0.0
    for r in range(N + 2):
        for A in itertools.combinations(range(N + 1), r):
            f = solve_poisson_stein(lam, A, N, extra=2).f
            best = max(best, abs(float(f[k + 1] @ up - f[k] @ down)))
    return best


def kappa_simple(kernel: JumpKernel, lam: float, c_scale: float) -> float:
    p = kernel.probs
    return (
        float(p @ np.abs(c_scale * kernel.Pi(1) - lam))
        + float(p @ np.abs(c_scale * kernel.Pi(-1) - kernel.values))
    ) / math.sqrt(lam)


def _dense_joint(c: ExactPairCoupling) -> np.ndarray:
    """p[k, j] = P[W = k, W' = j] indexed by the integer values themselves."""
    top = int(c.values.max())
    idx = c.values.astype(int)
    p = np.zeros((top + 1, top + 1))
    p[np.ix_(idx, idx)] = c.joint
    return p


def asymmetry(c: ExactPairCoupling, i: int) -> np.ndarray:
    """d_k = p_{k,k+i} - p_{k+i,k} for k = 0..top-i."""
    p = _dense_joint(c)
    top = p.shape[0] - 1
    k = np.arange(top - i + 1)
    return p[k, k + i] - p[k + i, k]


def rho_singletons(c: ExactPairCoupling, basis: PoissonBasis) -> np.ndarray:
    """r_j = sum_{i>=2} sum_k (p_{k,k+i} - p_{k+i,k}) Delta_i G_j(k) for each singleton j."""
    top = int(c.values.max())
    # G_j(w) = f_j(1) + ... + f_j(w) for w >= 0
    G = np.hstack([np.zeros((basis.F.shape[0], 1)), np.cumsum(basis.F[:, 1:], axis=1)])
    r = np.zeros(basis.F.shape[0])
    for i in range(2, top + 1):
        d = asymmetry(c, i)
        k = np.arange(len(d))
        r += (G[:, k + i] - G[:, k]) @ d
    return r


def rho_jump_expectation(c: ExactPairCoupling, f: np.ndarray, i: int) -> float:
    """E{I_i Delta_i G(W) + I_{-i} Delta_{-i} G(W)} summed directly over the joint."""
    G = np.concatenate([[0.0], np.cumsum(f[1:])])
    p = _dense_joint(c)
    top = p.shape[0] - 1
    total = 0.0
    for k in range(top + 1):
        if k + i <= top:
            total += p[k, k + i] * (G[k + i] - G[k])
        if k - i >= 0:
            total += p[k, k - i] * (G[k - i] - G[k])
    return total


def rho_terms(c: ExactPairCoupling, lam: float, basis: PoissonBasis,
              kernel: Optional[JumpKernel] = None) -> tuple:
    """(rho_exact, rho_bound_joint, rho_bound_marginal)."""
    _check_integer_coupling(c)
    kernel = kernel or jump_probabilities(c)
    top = int(c.values.max())
    rho_exact = _sup_over_sets(rho_singletons(c, basis))
    joint_sum = sum(i * float(np.abs(asymmetry(c, i)).sum()) for i in range(2, top + 1))
    marg_sum = sum(abs(i) * kernel.marginal_Pi[i] for i in kernel.displacements if abs(i) >= 2)
    s = 1.0 / math.sqrt(lam)
    return rho_exact, s * joint_sum, s * marg_sum


@dataclass(frozen=True)
class PoissonBoundReport:
    lam: float
    c: float
    mode: str
    kappa_exact: float
    kappa_simple: float
    rho_exact: float
    rho_bound_joint: float
    rho_bound_marginal: float
    total_bound: float
    dtv_lower: float
    dtv_upper: float

    @property
    def dtv_actual(self) -> TVInterval:
        return TVInterval(self.dtv_lower, self.dtv_upper)

    @property
    def holds(self) -> bool:
        return self.total_bound >= self.dtv_upper - THEOREM_SLACK

    @property
    def ordered(self) -> bool:
        e = 1e-10
        return (
            self.kappa_exact <= self.kappa_simple + e
            and self.rho_exact <= self.rho_bound_joint + e
            and self.rho_bound_joint <= self.rho_bound_marginal + e
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        out["ordered"] = self.ordered
        return out


def poisson_total(c: ExactPairCoupling, lam: float, c_scale: float, mode: str = "exact",
                  tail_tol: float = 1e-14, basis: Optional[PoissonBasis] = None) -> PoissonBoundReport:
    """kappa + c rho next to the exact total variation distance.

    ``exact`` uses the realised suprema; ``bounded`` uses the simple kappa bound
    and the joint-asymmetry rho bound.
    """
    if mode not in ("exact", "bounded"):
        raise ValueError(f"mode must be 'exact' or 'bounded', got {mode!r}")
    if not c_scale > 0:
        raise ParameterError(f"c must be positive, got {c_scale!r}")
    _check_integer_coupling(c)
    kernel = jump_probabilities(c)
    basis = basis or PoissonBasis.for_coupling(c, lam, kernel)
    k_ex = kappa_exact(c, kernel, lam, c_scale, basis)
    k_si = kappa_simple(kernel, lam, c_scale)
    r_ex, r_j, r_m = rho_terms(c, lam, basis, kernel)
    total = k_ex + c_scale * r_ex if mode == "exact" else k_si + c_scale * r_j
    dtv = tv_distance_to_poisson(c.marginal(), lam, tail_tol)
    return PoissonBoundReport(
        lam=lam,
        c=c_scale,
        mode=mode,
        kappa_exact=k_ex,
        kappa_simple=k_si,
        rho_exact=r_ex,
        rho_bound_joint=r_j,
        rho_bound_marginal=r_m,
        total_bound=total,
        dtv_lower=dtv.lower,
        dtv_upper=dtv.upper,
    )


def default_c_grid(num: int = 50) -> np.ndarray:
    return np.logspace(-2, 3, num)


def choose_c(c: ExactPairCoupling, lam: float, grid: Sequence[float], mode: str = "bounded") -> float:
    """Grid argmin of the total bound in the given mode; ties go to the smaller c.

    In ``exact`` mode kappa_c tends to d_TV itself as c -> 0, so the argmin sits
    at the bottom of the grid; ``bounded`` is the mode in which c is a real knob.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ParameterError("c grid is empty")
    if grid[0] <= 0:
        raise ParameterError("c grid must be positive")
    if mode not in ("exact", "bounded"):
        raise ValueError(f"mode must be 'exact' or 'bounded', got {mode!r}")
    kernel = jump_probabilities(c)
    if mode == "bounded":
        rho = rho_terms(c, lam, PoissonBasis.for_coupling(c, lam, kernel), kernel)[1]
        totals = [kappa_simple(kernel, lam, g) + g * rho for g in grid]
    else:
        basis = PoissonBasis.for_coupling(c, lam, kernel)
        # s_j(c) = c * a_j - b_j is affine in c
        a = kappa_singletons(kernel, lam, 1.0, basis) - kappa_singletons(kernel, lam, 0.0, basis)
        b = -kappa_singletons(kernel, lam, 0.0, basis)
        rho = _sup_over_sets(rho_singletons(c, basis))
        totals = [_sup_over_sets(g * a - b) + g * rho for g in grid]
    return grid[int(np.argmin(totals))]
