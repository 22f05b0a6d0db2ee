"""Desk-scale pair couplings exercising every bound and identity check.

Each constructor returns ``(coupling, metadata)``. Couplings are exact: they are
built from enumerated configurations or from the stationary law of a small
Markov chain, never from samples.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .couplings import ExactPairCoupling, from_markov_chain
from .numerics import ParameterError, poisson_cutoff, poisson_pmf


@dataclass(frozen=True)
class ModelMetadata:
    name: str
    params: dict
    structural_lambda: Optional[float] = None  # regression step of E[W'|W] = (1 - lam) W + R
    structural_c: Optional[float] = None
    poisson_mean: Optional[float] = None
    exchangeable_expected: bool = True
    A_bound: Optional[float] = None
    notes: str = ""


def rademacher_transition(n: int) -> np.ndarray:
    """Lumped resampling chain on k = number of +1 signs.

    One coordinate is chosen uniformly and replaced by a fresh fair sign.
    """
    P = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        down = 0.5 * k / n
        up = 0.5 * (n - k) / n
        if k > 0:
            P[k, k - 1] = down
        if k < n:
            P[k, k + 1] = up
        P[k, k] = 1.0 - down - up
    return P


def rademacher_sum(n: int):
    """W = sum of n fair signs / sqrt(n); W' resamples one uniformly chosen sign."""
    if not (isinstance(n, (int, np.integer)) and 2 <= n <= 40):
        raise ParameterError(f"rademacher_sum needs integer 2 <= n <= 40, got {n!r}")
    n = int(n)
    k = np.arange(n + 1)
    pi = np.array([math.comb(n, int(i)) for i in k], dtype=float) / 2.0**n
    joint = pi[:, None] * rademacher_transition(n)
    values = (2 * k - n) / math.sqrt(n)
    meta = ModelMetadata(
        name="rademacher",
        params={"n": n},
        structural_lambda=1.0 / n,
        exchangeable_expected=True,
        A_bound=2.0 / math.sqrt(n),
        notes="E[W'|W] = (1 - 1/n) W, R = 0",
    )
    return ExactPairCoupling.from_joint(values, joint), meta


def immigration_death_transition(lam: float, N: int, c_norm: float) -> np.ndarray:
    P = np.zeros((N + 1, N + 1))
    for k in range(N + 1):
        if k < N:
            P[k, k + 1] = lam / c_norm
        if k > 0:
            P[k, k - 1] = k / c_norm
        P[k, k] = 1.0 - P[k].sum()
    return P


def _check_immigration(lam, N, c_norm):
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam!r}")
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    if c_norm < lam + N:
        raise ParameterError(f"c_norm = {c_norm!r} must be at least lambda + N = {lam + N!r}")


def immigration_death(lam: float = 1.0, N: int = 12, c_norm: Optional[float] = None):
    """Birth rate lam, death rate k, uniformised by c_norm, truncated at N.

    Reversible, with stationary law Po(lam) conditioned on {0, ..., N}.
    """
    c_norm = float(lam + N) if c_norm is None else float(c_norm)
    _check_immigration(lam, N, c_norm)
    pi = np.ones(N + 1)
    for k in range(N):
        pi[k + 1] = pi[k] * lam / (k + 1)
    pi /= pi.sum()
    joint = pi[:, None] * immigration_death_transition(lam, N, c_norm)
    meta = ModelMetadata(
        name="immigration_death",
        params={"lambda": lam, "N": N, "c_norm": c_norm},
        structural_c=c_norm,
        poisson_mean=lam,
        exchangeable_expected=True,
        notes="jumps in {-1, 0, 1}",
    )
    return ExactPairCoupling.from_joint(np.arange(N + 1), joint), meta


def skewed_two_step(lam: float = 1.0, N: int = 10, eps: float = 0.01, c_norm: Optional[float] = None):
    """Immigration-death chain plus a one-way cycle k -> k+2 -> k+1 -> k of probability eps.

    The cycle is added for every even k with k + 2 <= N, its mass taken from the
    holding probabilities. The result is irreversible and makes jumps of size 2;
    its stationary law is recomputed.
    """
    c_norm = float(lam + N) if c_norm is None else float(c_norm)
    _check_immigration(lam, N, c_norm)
    if eps < 0:
        raise ParameterError(f"eps must be non-negative, got {eps!r}")
    P = immigration_death_transition(lam, N, c_norm)
    for k in range(0, N - 1, 2):
        for a, b in ((k, k + 2), (k + 2, k + 1), (k + 1, k)):
            P[a, b] += eps
            P[a, a] -= eps
    if np.any(P < 0) or np.any(P > 1):
        raise ParameterError(f"eps = {eps!r} pushes a transition probability outside [0, 1]")
    meta = ModelMetadata(
        name="skewed_two_step",
        params={"lambda": lam, "N": N, "eps": eps, "c_norm": c_norm},
        structural_c=c_norm,
        poisson_mean=lam,
        exchangeable_expected=(eps == 0),
        notes="non-reversible cyclic perturbation; jumps of size 2",
    )
    return from_markov_chain(P, np.arange(N + 1)), meta


def _fixed_points(perms: np.ndarray) -> np.ndarray:
    return (perms == np.arange(perms.shape[1])).sum(axis=1)


def permutation_fixed_points(n: int = 6):
    """W = fixed points of a uniform permutation sigma of n letters.

    W' counts fixed points of sigma composed with a uniform transposition.
    """
    if not (isinstance(n, (int, np.integer)) and 2 <= n <= 8):
        raise ParameterError(f"permutation_fixed_points needs integer 2 <= n <= 8, got {n!r}")
    n = int(n)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    w = _fixed_points(perms)
    joint = np.zeros((n + 1, n + 1))
    pairs = list(itertools.combinations(range(n), 2))
    for a, b in pairs:
        swapped = perms.copy()
        # (sigma o tau)(x) = sigma(tau(x)) with tau = (a b)
        swapped[:, [a, b]] = perms[:, [b, a]]
        np.add.at(joint, (w, _fixed_points(swapped)), 1.0)
    joint /= joint.sum()
    meta = ModelMetadata(
        name="fixed_points",
        params={"n": n},
        poisson_mean=1.0,
        exchangeable_expected=True,
        notes="random-transposition walk; jumps in {-2, ..., 2}",
    )
    return ExactPairCoupling.from_joint(np.arange(n + 1), joint), meta


def biased_cycle_normal(m: int = 12, drift: float = 0.2):
    """Walk on a cycle of m states stepping +1 w.p. 1/2 + drift and -1 otherwise.

    State k carries the value cos(2 pi k / m + pi / (2m)), standardized. The
    quarter-step phase keeps all m values distinct; without it states k and
    m - k would share a value and lumping would restore exchangeability.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 5):
        raise ParameterError(f"biased_cycle_normal needs integer m >= 5, got {m!r}")
    if not 0 <= drift < 0.5:
        raise ParameterError(f"drift must lie in [0, 1/2), got {drift!r}")
    m = int(m)
    P = np.zeros((m, m))
    for k in range(m):
        P[k, (k + 1) % m] += 0.5 + drift
        P[k, (k - 1) % m] += 0.5 - drift
    theta = 2.0 * math.pi * np.arange(m) / m + math.pi / (2 * m)
    values = math.sqrt(2.0) * np.cos(theta)
    meta = ModelMetadata(
        name="biased_cycle",
        params={"m": m, "drift": drift},
        exchangeable_expected=(drift == 0),
        notes="doubly stochastic, uniform stationary law; R != 0 when drift > 0",
    )
    return from_markov_chain(P, values), meta


def diagonal_poisson(lam: float = 1.0, tail_tol: float = 1e-14):
    """W' = W with W ~ Po(lam) truncated where the tail drops below tail_tol."""
    K = poisson_cutoff(lam, tail_tol)
    p = poisson_pmf(lam, np.arange(K + 1))
    p /= p.sum()
    meta = ModelMetadata(
        name="diagonal_poisson",
        params={"lambda": lam, "tail_tol": tail_tol},
        poisson_mean=lam,
        exchangeable_expected=True,
    )
    return ExactPairCoupling.from_joint(np.arange(K + 1), np.diag(p)), meta


MODELS = {
    "rademacher": rademacher_sum,
    "immigration_death": immigration_death,
    "skewed_two_step": skewed_two_step,
    "fixed_points": permutation_fixed_points,
    "biased_cycle": biased_cycle_normal,
    "diagonal_poisson": diagonal_poisson,
}

# CLI parameter name -> constructor keyword
_PARAM_ALIASES = {"lambda": "lam"}
_INT_PARAMS = {"n", "N", "m"}


def build_model(name: str, params: Optional[dict] = None):
    """Construct a model by registry name from string or numeric parameters."""
    if name not in MODELS:
        raise ParameterError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    kwargs = {}
    for key, raw in (params or {}).items():
        try:
            value = int(raw) if key in _INT_PARAMS else float(raw)
        except (TypeError, ValueError):
            raise ParameterError(f"parameter {key}={raw!r} is not numeric") from None
        if key in _INT_PARAMS and float(raw) != value:
            raise ParameterError(f"parameter {key} must be an integer, got {raw!r}")
        kwargs[_PARAM_ALIASES.get(key, key)] = value
    try:
        return MODELS[name](**kwargs)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {name}: {exc}") from None


# (name, params) of the couplings every certification sweep runs over
NORMAL_ZOO = [
    ("rademacher", {"n": 4}),
    ("rademacher", {"n": 8}),
    ("biased_cycle", {"m": 8, "drift": 0.2}),
    ("biased_cycle", {"m": 12, "drift": 0.1}),
    ("biased_cycle", {"m": 12, "drift": 0.0}),
    ("immigration_death", {"lambda": 1.0, "N": 12}),
    ("skewed_two_step", {"lambda": 1.0, "N": 10, "eps": 0.01}),
    ("fixed_points", {"n": 5}),
]

POISSON_ZOO = [
    ("immigration_death", {"lambda": 0.5, "N": 12}),
    ("immigration_death", {"lambda": 1.0, "N": 12}),
    ("immigration_death", {"lambda": 2.0, "N": 12}),
    ("skewed_two_step", {"lambda": 1.0, "N": 10, "eps": 0.005}),
    ("skewed_two_step", {"lambda": 1.0, "N": 10, "eps": 0.01}),
    ("fixed_points", {"n": 4}),
    ("fixed_points", {"n": 5}),
    ("fixed_points", {"n": 6}),
    ("diagonal_poisson", {"lambda": 2.0}),
]
