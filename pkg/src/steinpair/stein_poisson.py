"""Poisson Stein equation  lam f(j+1) - j f(j) = 1[j in A] - Po(lam){A}.

Solutions use the convention f(0) = 0 (the equation never constrains f(0)).
Values are computed from the closed form

    f(k+1) = (Po(A & U_k) Po(U_k^c) - Po(A & U_k^c) Po(U_k)) / (lam Po{k}),
    U_k = {0, ..., k},

in log space. The forward recursion amplifies rounding by j/lam per step and is
only used to measure the residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import gammaln, logsumexp

from .couplings import ExactPairCoupling, JumpKernel, jump_probabilities
from .numerics import ParameterError


def _log_pmf(lam: float, upto: int) -> np.ndarray:
    j = np.arange(upto + 1, dtype=float)
    return j * math.log(lam) - lam - gammaln(j + 1.0)


def _tail_horizon(lam: float, top: int) -> int:
    return top + int(math.ceil(60 + lam + 20 * math.sqrt(lam)))


def _log_cum(logs: np.ndarray) -> np.ndarray:
    """log of running sums, tolerating -inf entries."""
    with np.errstate(invalid="ignore"):
        return np.logaddexp.accumulate(logs)


def _closed_form(lam: float, indicator: np.ndarray, top: int) -> np.ndarray:
    """f(0..top) for the set with membership vector ``indicator`` over {0..len-1}."""
    L = _tail_horizon(lam, max(top, len(indicator)))
    logp = _log_pmf(lam, L)
    member = np.zeros(L + 1, dtype=bool)
    member[: len(indicator)] = indicator
    logpA = np.where(member, logp, -np.inf)

    k = np.arange(top)
    log_U = _log_cum(logp)[k]
    log_Uc = _log_cum(logp[::-1])[::-1][k + 1]
    log_AU = _log_cum(logpA)[k]
    log_AUc = _log_cum(logpA[::-1])[::-1][k + 1]
    scale = -logp[k] - math.log(lam)
    with np.errstate(invalid="ignore"):
        f = np.exp(log_AU + log_Uc + scale) - np.exp(log_AUc + log_U + scale)
    return np.concatenate([[0.0], np.nan_to_num(f, nan=0.0)])


@dataclass(frozen=True, eq=False)
class PoissonSteinSolution:
    lam: float
    A: frozenset
    N: int
    f: np.ndarray  # f(0), ..., f(len - 1)
    norm: float
    delta1_norm: float

    def residual(self) -> float:
        """max_j |lam f(j+1) - j f(j) - (1[j in A] - Po(A))| over j < len(f) - 1."""
        return recursion_residual(self.lam, self.A, self.f)


def poisson_set_mass(lam: float, A: Iterable[int]) -> float:
    A = sorted(A)
    if not A:
        return 0.0
    return float(np.exp(logsumexp(_log_pmf(lam, A[-1])[A])))


def recursion_residual(lam: float, A, f: np.ndarray) -> float:
    j = np.arange(len(f) - 1)
    ind = np.isin(j, list(A)).astype(float)
    res = lam * f[1:] - j * f[:-1] - (ind - poisson_set_mass(lam, A))
    return float(np.max(np.abs(res))) if len(res) else 0.0


def _validate(lam, A, N):
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam!r}")
    if N < 0:
        raise ParameterError(f"support cap N must be non-negative, got {N!r}")
    bad = [a for a in A if not (0 <= a <= N)]
    if bad:
        raise ParameterError(f"A must lie in {{0..{N}}}; offending elements {bad}")


def _from_values(lam, A, N, f) -> PoissonSteinSolution:
    return PoissonSteinSolution(
        lam=lam,
        A=frozenset(int(a) for a in A),
        N=N,
        f=f,
        norm=float(np.max(np.abs(f))),
        delta1_norm=float(np.max(np.abs(np.diff(f)))) if len(f) > 1 else 0.0,
    )


def solve_poisson_stein(lam: float, A: Iterable[int], N: int, extra: int = 2) -> PoissonSteinSolution:
    """Solution f_A on {0, ..., N + extra} for A a subset of {0, ..., N}."""
    A = sorted({int(a) for a in A})
    _validate(lam, A, N)
    ind = np.zeros(N + 1, dtype=bool)
    ind[A] = True
    f = _closed_form(lam, ind, N + extra)
    return _from_values(lam, A, N, f)


def singleton_matrix(lam: float, N: int, extra: int = 2) -> np.ndarray:
    """F[j, k] = f_{{j}}(k) for j in {0..N}, k in {0..N+extra}."""
    _validate(lam, [], N)
    top = N + extra
    L = _tail_horizon(lam, top)
    logp = _log_pmf(lam, L)
    k = np.arange(top)
    log_U = _log_cum(logp)[k]
    log_Uc = _log_cum(logp[::-1])[::-1][k + 1]
    j = np.arange(N + 1)[:, None]
    # f_j(k+1) = p_j / (lam p_k) * (Po(U_k^c) if j <= k else -Po(U_k))
    base = logp[: N + 1][:, None] - logp[k][None, :] - math.log(lam)
    body = np.where(j <= k[None, :], np.exp(base + log_Uc), -np.exp(base + log_U))
    return np.hstack([np.zeros((N + 1, 1)), body])


def singleton_basis(lam: float, N: int, extra: int = 2) -> list:
    F = singleton_matrix(lam, N, extra)
    return [_from_values(lam, [j], N, F[j]) for j in range(N + 1)]


def combine(basis: list, A: Iterable[int]) -> np.ndarray:
    """f_A as the pointwise sum of singleton solutions (linearity in the indicator)."""
    A = list(A)
    if not A:
        return np.zeros_like(basis[0].f)
    return np.sum([basis[a].f for a in A], axis=0)


class DiscreteAntiderivative:
    """G(w) = sum_{k=1}^{w} f(k) - sum_{k=0}^{-w-1} f(-k), empty sums being zero.

    ``f_values[i]`` holds f(offset + i); G is available on the integers w for
    which every summand is known.
    """

    def __init__(self, f_values, offset: int = 0):
        self.f_values = np.asarray(f_values, dtype=float)
        self.offset = int(offset)
        if self.offset > 1:
            raise ParameterError("f must be known at 1 (offset <= 1) to build G")

    @property
    def f_range(self) -> tuple:
        return self.offset, self.offset + len(self.f_values) - 1

    @property
    def G_range(self) -> tuple:
        lo, hi = self.f_range
        return (lo - 1 if lo <= 0 else 0), hi

    def f(self, k: int) -> float:
        lo, hi = self.f_range
        if not lo <= k <= hi:
            raise IndexError(f"f({k}) outside known range [{lo}, {hi}]")
        return float(self.f_values[k - self.offset])

    def G(self, w: int) -> float:
        lo, hi = self.G_range
        if not lo <= w <= hi:
            raise IndexError(f"G({w}) outside range [{lo}, {hi}]")
        pos = sum(self.f(k) for k in range(1, w + 1))
        neg = sum(self.f(-k) for k in range(0, -w))
        return pos - neg

    def G_array(self, ws) -> np.ndarray:
        return np.array([self.G(int(w)) for w in ws])


def discrete_G(f: DiscreteAntiderivative, w: int) -> float:
    return f.G(w)


def delta_i_G(antider: DiscreteAntiderivative, w: int, i: int) -> float:
    return antider.G(w + i) - antider.G(w)


def antiderivative_of(sol_or_f) -> DiscreteAntiderivative:
    f = sol_or_f.f if isinstance(sol_or_f, PoissonSteinSolution) else sol_or_f
    return DiscreteAntiderivative(f, offset=0)


def _f_at(f: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if idx.max(initial=0) >= len(f):
        raise IndexError(f"f known on 0..{len(f) - 1}, needed up to {idx.max()}")
    return f[idx]


def telescope_check(c: ExactPairCoupling, f, kernel: JumpKernel = None) -> float:
    """sum_i E{P_i(W) Delta_i G(W)}, which vanishes whenever W' and W share a law."""
    f = f.f if isinstance(f, PoissonSteinSolution) else np.asarray(f, dtype=float)
    kernel = kernel or jump_probabilities(c)
    vals = kernel.values.astype(int)
    G = DiscreteAntiderivative(f)
    total = 0.0
    for i in kernel.displacements:
        if i == 0:
            continue
        dG = np.array([delta_i_G(G, int(w), i) if kernel.P[i][n] > 0 else 0.0
                       for n, w in enumerate(vals)])
        total += float((kernel.probs * kernel.P[i]) @ dG)
    return total


def ef_zero_poisson_check(c: ExactPairCoupling, f, kernel: JumpKernel = None) -> float:
    """E{f(W+1) P_1(W) - f(W) P_{-1}(W)}: zero for exchangeable pairs."""
    f = f.f if isinstance(f, PoissonSteinSolution) else np.asarray(f, dtype=float)
    kernel = kernel or jump_probabilities(c)
    vals = kernel.values.astype(int)
    if np.any(vals < 0):
        raise ParameterError("the Poisson antisymmetric function needs W >= 0")
    return float(kernel.probs @ (_f_at(f, vals + 1) * kernel.Pi(1) - _f_at(f, vals) * kernel.Pi(-1)))


def detailed_balance_gap(c: ExactPairCoupling, k: int) -> float:
    """E F for f = 1{. = k}; equals p_{k-1,k} - p_{k,k-1}."""
    top = int(c.values.max()) + 2
    f = np.zeros(top + 1)
    if 0 <= k <= top:
        f[k] = 1.0
    return ef_zero_poisson_check(c, f)
