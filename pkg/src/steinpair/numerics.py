"""Special functions, fixed Gauss-Legendre quadrature and probability distances.

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, ndtr, pdtrc

MASS_TOL = 1e-12


class ParameterError(ValueError):
    """A model or distribution parameter lies outside its admissible range."""


@dataclass(frozen=True)
class DiscreteDistribution:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape:
            raise ParameterError("values and probs must be 1-d arrays of equal length")
        if np.any(probs < 0):
            raise ParameterError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise ParameterError(f"total mass {probs.sum()!r} differs from 1")
        if np.any(np.diff(values) <= 0):
            raise ParameterError("values must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    def cdf(self, x) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="right")
        return np.concatenate([[0.0], np.cumsum(self.probs)])[idx]

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def var(self) -> float:
        mu = self.mean()
        return float(((self.values - mu) ** 2) @ self.probs)


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre rule with ``node_count`` nodes on each of ``panels`` equal panels."""

    node_count: int = 32
    panels: int = 1
    _rule: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 2 or self.panels < 1:
            raise ParameterError("need node_count >= 2 and panels >= 1")
        object.__setattr__(self, "_rule", leggauss(self.node_count))

    def nodes_weights(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        x, w = self._rule
        edges = np.linspace(a, b, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights


DEFAULT_TAU = QuadratureSpec(32)


def std_normal_cdf(x):
    return ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def poisson_pmf(lam: float, k):
    """Po(lam){k}, evaluated as exp(k log lam - lam - log k!) so large k cannot overflow."""
    if not lam > 0:
        raise ParameterError(f"Poisson mean must be positive, got {lam!r}")
    k = np.asarray(k)
    if np.any(k < 0):
        raise ParameterError("Poisson support is the non-negative integers")
    out = np.exp(k * math.log(lam) - lam - gammaln(k + 1.0))
    return float(out) if out.ndim == 0 else out


def poisson_cutoff(lam: float, tail_tol: float) -> int:
    """Smallest K with Po(lam){K+1, K+2, ...} < tail_tol."""
    if not lam > 0:
        raise ParameterError(f"Poisson mean must be positive, got {lam!r}")
    k = int(lam)
    while pdtrc(k, lam) >= tail_tol:
        k += 1
    return k


def integrate(fn: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_TAU) -> float:
    """Fixed Gauss-Legendre integral of a vectorised ``fn`` over [a, b]."""
    if a > b:
        return -integrate(fn, b, a, spec)
    nodes, weights = spec.nodes_weights(a, b)
    return float(np.dot(weights, fn(nodes)))


def kolmogorov_distance(dist: DiscreteDistribution, reference_cdf: Callable = std_normal_cdf) -> float:
    """sup_x |F(x) - reference_cdf(x)|, taking both one-sided limits of F at every atom."""
    ref = np.asarray(reference_cdf(dist.values), dtype=float)
    right = np.cumsum(dist.probs)
    left = right - dist.probs
    return float(max(np.max(np.abs(right - ref)), np.max(np.abs(left - ref))))


class TVInterval(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def tv_distance_to_poisson(dist: DiscreteDistribution, lam: float, tail_tol: float = 1e-14) -> TVInterval:
    """Enclose d_TV(dist, Po(lam)) in an interval of width at most tail_tol / 2.

    The Poisson law is summed exactly up to a cutoff K beyond both the support
    of ``dist`` and the point where its tail mass drops below ``tail_tol``.
    """
    vals = dist.values
    if np.any(vals < 0) or np.any(vals != np.round(vals)):
        raise ParameterError("distribution must live on the non-negative integers")
    cutoff = max(int(vals.max()), poisson_cutoff(lam, tail_tol))
    p = np.zeros(cutoff + 1)
    p[vals.astype(int)] = dist.probs
    q = poisson_pmf(lam, np.arange(cutoff + 1))
    lower = 0.5 * float(np.abs(p - q).sum())
    return TVInterval(lower, lower + 0.5 * float(pdtrc(cutoff, lam)))


def integer_distribution(probs: Sequence[float]) -> DiscreteDistribution:
    """Law on {0, ..., len(probs)-1} with the given point masses."""
    probs = np.asarray(probs, dtype=float)
    return DiscreteDistribution(np.arange(len(probs), dtype=float), probs)
