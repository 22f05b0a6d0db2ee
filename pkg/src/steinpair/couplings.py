"""Exact finite pair couplings (W, W') with equal marginals and the statistics read off them.

A coupling is a joint probability matrix over a common sorted value set; every
expectation used elsewhere in the package is an exact finite sum against it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .numerics import DiscreteDistribution, MASS_TOL

MARGINAL_TOL = 1e-10
STANDARD_TOL = 1e-10
LAMBDA_TOL = 1e-12


class CouplingError(ValueError):
    """A coupling cannot be built, or violates a precondition of the requested statistic."""


@dataclass(frozen=True, eq=False)
class ExactPairCoupling:
    values: np.ndarray
    joint: np.ndarray
    integer_valued: bool
    marginal_discrepancy: float

    @classmethod
    def from_joint(cls, values, joint, tol: float = MARGINAL_TOL) -> "ExactPairCoupling":
        """Build a coupling from state values and a state-level joint matrix.

        States sharing a value are merged (the coupling is a law of values,
        not of states), states carrying no mass are dropped, and the result is
        sorted by value.
        """
        values = np.asarray(values, dtype=float)
        joint = np.asarray(joint, dtype=float)
        m = len(values)
        if values.ndim != 1 or joint.shape != (m, m):
            raise CouplingError(f"joint must be {m}x{m} to match {m} values")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(joint)):
            raise CouplingError("values and joint must be finite")
        if np.any(joint < 0):
            raise CouplingError("joint probabilities must be non-negative")
        if abs(joint.sum() - 1.0) > MASS_TOL:
            raise CouplingError(f"joint mass {joint.sum()!r} differs from 1")

        uniq, inverse = np.unique(values, return_inverse=True)
        lump = np.zeros((m, len(uniq)))
        lump[np.arange(m), inverse] = 1.0
        joint = lump.T @ joint @ lump

        keep = (joint.sum(axis=1) > 0) | (joint.sum(axis=0) > 0)
        uniq, joint = uniq[keep], joint[np.ix_(keep, keep)]

        discrepancy = float(np.max(np.abs(joint.sum(axis=1) - joint.sum(axis=0))))
        if discrepancy > tol:
            raise CouplingError(
                f"marginals of W and W' differ by {discrepancy:.3e} (tolerance {tol:.1e})"
            )
        integer_valued = bool(np.all(uniq == np.round(uniq)))
        return cls(uniq, joint, integer_valued, discrepancy)

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def probs(self) -> np.ndarray:
        """Law of W (row marginal)."""
        return self.joint.sum(axis=1)

    def marginal(self) -> DiscreteDistribution:
        p = self.probs
        return DiscreteDistribution(self.values, p / p.sum())

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def var(self) -> float:
        return float(((self.values - self.mean()) ** 2) @ self.probs)

    def displacement(self) -> np.ndarray:
        """V[k, j] = v_j - v_k."""
        return self.values[None, :] - self.values[:, None]

    def expect(self, fn_pair) -> float:
        """E fn(W, W') for a vectorised fn(w, w')."""
        w = self.values[:, None]
        wp = self.values[None, :]
        return float(np.sum(self.joint * fn_pair(w, wp)))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "joint": self.joint.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict, tol: float = MARGINAL_TOL) -> "ExactPairCoupling":
        return cls.from_joint(obj["values"], obj["joint"], tol=tol)

    @classmethod
    def from_json(cls, text: str, tol: float = MARGINAL_TOL) -> "ExactPairCoupling":
        return cls.from_dict(json.loads(text), tol=tol)


def stationary_distribution(transition) -> np.ndarray:
    """Unique stationary law of a finite chain; raises if it is not unique."""
    P = np.asarray(transition, dtype=float)
    m = P.shape[0]
    if P.shape != (m, m):
        raise CouplingError("transition matrix must be square")
    if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > MASS_TOL:
        raise CouplingError("transition matrix must be row-stochastic")

    # unique stationary law <=> exactly one closed communicating class
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    closed = 0
    for comp in range(n_comp):
        members = labels == comp
        if P[np.ix_(members, ~members)].sum() == 0:
            closed += 1
    if closed != 1:
        raise CouplingError(
            f"chain has {closed} closed classes; stationary distribution is not unique"
        )

    if m <= 2000:
        A = P.T - np.eye(m)
        A[-1, :] = 1.0
        rhs = np.zeros(m)
        rhs[-1] = 1.0
        pi = np.linalg.solve(A, rhs)
    else:
        lazy = 0.5 * (P + np.eye(m))
        pi = np.full(m, 1.0 / m)
        for _ in range(100_000):
            nxt = pi @ lazy
            if np.max(np.abs(nxt - pi)) < 1e-15:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def from_markov_chain(transition, values, tol: float = MARGINAL_TOL) -> ExactPairCoupling:
    """(W, W') = two consecutive steps of the chain started in equilibrium."""
    P = np.asarray(transition, dtype=float)
    pi = stationary_distribution(P)
    return ExactPairCoupling.from_joint(values, pi[:, None] * P, tol=tol)


def is_exchangeable(c: ExactPairCoupling, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(c.joint - c.joint.T)) <= tol)


def standardize(c: ExactPairCoupling) -> ExactPairCoupling:
    """Affinely rescale values so that W has mean 0 and variance 1."""
    mu, var = c.mean(), c.var()
    if not var > 0:
        raise CouplingError("W is degenerate (zero variance); cannot standardize")
    vals = (c.values - mu) / np.sqrt(var)
    # recentre once more to absorb rounding in the first pass
    p = c.probs
    vals = vals - vals @ p
    vals = vals / np.sqrt((vals**2) @ p)
    return ExactPairCoupling(vals, c.joint, bool(np.all(vals == np.round(vals))), c.marginal_discrepancy)


def _require_standardized(c: ExactPairCoupling):
    if abs(c.mean()) > STANDARD_TOL or abs(c.var() - 1.0) > STANDARD_TOL:
        raise CouplingError(
            f"coupling must be standardized (EW = {c.mean():.3e}, Var W = {c.var():.12f})"
        )


@dataclass(frozen=True, eq=False)
class RegressionDecomposition:
    """E[W' | W] = (1 - lam) W + R, with R stored state by state."""

    lam: float
    R: np.ndarray
    ER2: float
    alpha: float
    EV2: float
    ER: float


def conditional_mean(c: ExactPairCoupling) -> np.ndarray:
    return (c.joint @ c.values) / c.probs


def regression_decompose(c: ExactPairCoupling, lam: Optional[float] = None) -> RegressionDecomposition:
    """Realise the linear regression condition for a standardized coupling.

    Without an explicit ``lam`` the choice 1 - E{WW'} is used, which makes
    alpha = E{RW} vanish.
    """
    _require_standardized(c)
    if lam is None:
        lam = 1.0 - c.expect(lambda w, wp: w * wp)
    if not (LAMBDA_TOL < lam < 1.0 - LAMBDA_TOL):
        raise CouplingError(f"regression step lambda = {lam!r} violates 0 < lambda < 1")
    p = c.probs
    R = conditional_mean(c) - (1.0 - lam) * c.values
    EV2 = c.expect(lambda w, wp: (wp - w) ** 2)
    return RegressionDecomposition(
        lam=float(lam),
        R=R,
        ER2=float((R**2) @ p),
        alpha=float((R * c.values) @ p),
        EV2=EV2,
        ER=float(R @ p),
    )


@dataclass(frozen=True, eq=False)
class VMoments:
    EW_V2: np.ndarray  # state-wise E[V^2 | W]
    var_EWV2: float
    E_absV3: float
    A: float
    EV2: float


def conditional_V2(c: ExactPairCoupling, d: RegressionDecomposition) -> VMoments:
    """Moments of V = W' - W entering the normal bounds.

    Also enforces E V^2 = 2(lam - alpha), which follows from the regression
    condition once both marginals have unit variance.
    """
    _require_standardized(c)
    V = c.displacement()
    p = c.probs
    ew_v2 = (c.joint * V**2).sum(axis=1) / p
    EV2 = float(ew_v2 @ p)
    if abs(EV2 - 2.0 * (d.lam - d.alpha)) > 1e-10:
        raise CouplingError(
            f"E V^2 = {EV2!r} but 2(lambda - alpha) = {2 * (d.lam - d.alpha)!r}"
        )
    var = float(((ew_v2 - EV2) ** 2) @ p)
    support = c.joint > 0
    return VMoments(
        EW_V2=ew_v2,
        var_EWV2=var,
        E_absV3=float(np.sum(c.joint * np.abs(V) ** 3)),
        A=float(np.max(np.abs(V[support]))) if support.any() else 0.0,
        EV2=EV2,
    )


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Conditional displacement law P_i(w) = P[W' - W = i | W = w] of an integer coupling."""

    values: np.ndarray
    probs: np.ndarray
    displacements: tuple
    P: dict  # i -> array over states
    marginal_Pi: dict  # i -> E P_i(W)

    def Pi(self, i: int) -> np.ndarray:
        return self.P.get(i, np.zeros(len(self.values)))


def jump_probabilities(c: ExactPairCoupling) -> JumpKernel:
    if not c.integer_valued:
        raise CouplingError("jump kernel needs integer-valued W")
    V = np.round(c.displacement()).astype(int)
    p = c.probs
    disp = sorted({int(i) for i in V[c.joint > 0]})
    P = {}
    for i in disp:
        P[i] = np.where(V == i, c.joint, 0.0).sum(axis=1) / p
    return JumpKernel(
        values=c.values.copy(),
        probs=p,
        displacements=tuple(disp),
        P=P,
        marginal_Pi={i: float(P[i] @ p) for i in disp},
    )

