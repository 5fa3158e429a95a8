"""Financial value of side information (SI) and its bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import InvalidInputError, dec, dec_list
from .growth import Portfolio, solve_log_optimal
from .market import DiscreteMarket, SampleSet, empirical_market

__all__ = [
    "JointMarket",
    "PortfolioPolicy",
    "FvsiReport",
    "SliceInfeasibleError",
    "solve_conditional_portfolios",
    "fvsi",
    "fvsi_report",
    "mutual_information",
    "best_stock_entropy",
    "fvsi_bounds",
    "garble_si",
    "garble_labels",
    "convexity_probe",
    "entropy",
]


class SliceInfeasibleError(ValueError):
    def __init__(self, msg, state):
        super().__init__(msg)
        self.state = state


def entropy(p):
    """Shannon entropy in nats with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p @ np.log(p))) + 0.0


class JointMarket:
    """Joint law of a stock vector X and an SI state S in 1..K."""

    def __init__(self, base, K=None):
        if isinstance(base, SampleSet):
            if not base.has_si:
                raise InvalidInputError("samples carry no SI labels")
            K = base.K if K is None else K
            base = empirical_market(base)
        if base.si is None:
            raise InvalidInputError("joint market atoms need SI states")
        self.base = base
        self.K = int(base.si.max()) if K is None else int(K)
        if base.si.max() > self.K:
            raise InvalidInputError(f"SI state {int(base.si.max())} exceeds K={self.K}")
        self.si_marginal = np.bincount(base.si, weights=base.probs, minlength=self.K + 1)[1:]
        # integer ids of the distinct stock vectors
        _, self._x_ids = np.unique(base.values, axis=0, return_inverse=True)
        self._x_ids = self._x_ids.ravel()

    @classmethod
    def from_atoms(cls, values, probs, si, K=None):
        return cls(DiscreteMarket.from_atoms(values, probs, si), K)

    @property
    def dim(self):
        return self.base.dim

    def states(self):
        """SI states with positive probability, ascending."""
        return [k for k in range(1, self.K + 1) if self.si_marginal[k - 1] > 0]

    def x_marginal(self):
        return self.base.marginal()

    def conditional(self, k):
        return self.base.conditional(k)

    def joint_table(self):
        """p(x, s) as an (n_distinct_x, K) array."""
        T = np.zeros((self._x_ids.max() + 1, self.K))
        np.add.at(T, (self._x_ids, self.base.si - 1), self.base.probs)
        return T

    def mixed(self, other, t):
        """Joint law t * self + (1 - t) * other."""
        V = np.vstack([self.base.values, other.base.values])
        p = np.concatenate([t * self.base.probs, (1.0 - t) * other.base.probs])
        s = np.concatenate([self.base.si, other.base.si])
        keep = p > 0
        return JointMarket.from_atoms(V[keep], p[keep], s[keep], max(self.K, other.K))


@dataclass(frozen=True, eq=False)
class PortfolioPolicy:
    """One portfolio per SI state, with each state's optimal growth rate."""

    per_state: dict
    growth: dict
    si_marginal: np.ndarray

    @property
    def aided_growth(self):
        return float(sum(self.si_marginal[k - 1] * g for k, g in sorted(self.growth.items())))

    def to_dict(self):
        return {
            "per_state": {str(k): dec_list(b.weights) for k, b in sorted(self.per_state.items())},
            "growth": {str(k): dec(g) for k, g in sorted(self.growth.items())},
            "aided_growth": dec(self.aided_growth),
        }


def solve_conditional_portfolios(jm, tol=1e-12, max_iter=100_000):
    """Log-optimal portfolio for each SI state."""
    per_state, growth = {}, {}
    for k in jm.states():
        try:
            rep = solve_log_optimal(jm.conditional(k), tol=tol, max_iter=max_iter)
        except ValueError as exc:
            raise SliceInfeasibleError(f"SI state {k}: {exc}", k) from exc
        per_state[k] = rep.portfolio
        growth[k] = rep.growth_rate
    return PortfolioPolicy(per_state, growth, jm.si_marginal)


@dataclass(frozen=True, eq=False)
class FvsiReport:
    v_raw: float
    unconditional_growth: float
    unconditional_portfolio: Portfolio
    policy: PortfolioPolicy
    mi_bound: float
    entropy_bound: float

    @property
    def v_clamped(self):
        return max(self.v_raw, 0.0)

    @property
    def tighter(self):
        return "entropy" if self.entropy_bound < self.mi_bound else "mutual_information"

    def to_dict(self):
        ln2 = math.log(2.0)
        return {
            "v_raw": dec(self.v_raw),
            "v_clamped": dec(self.v_clamped),
            "v_clamped_bits": dec(self.v_clamped / ln2),
            "mi_bound": dec(self.mi_bound),
            "mi_bound_bits": dec(self.mi_bound / ln2),
            "entropy_bound": dec(self.entropy_bound),
            "entropy_bound_bits": dec(self.entropy_bound / ln2),
            "tighter_bound": self.tighter,
            "unconditional_growth": dec(self.unconditional_growth),
            "unconditional_portfolio": dec_list(self.unconditional_portfolio.weights),
            "policy": self.policy.to_dict(),
        }


def fvsi_report(jm, tol=1e-12, max_iter=100_000):
    policy = solve_conditional_portfolios(jm, tol, max_iter)
    base = solve_log_optimal(jm.x_marginal(), tol=tol, max_iter=max_iter)
    mi, ent = fvsi_bounds(jm)
    return FvsiReport(policy.aided_growth - base.growth_rate, base.growth_rate,
                      base.portfolio, policy, mi, ent)


def fvsi(jm, tol=1e-12, max_iter=100_000):
    """Growth-rate gain from conditioning the portfolio on S, clamped at zero.

    Use :func:`fvsi_report` for the raw difference.
    """
    return fvsi_report(jm, tol, max_iter).v_clamped


def mutual_information(jm):
    """Plug-in I(X; S) in nats."""
    T = jm.joint_table()
    px = T.sum(axis=1, keepdims=True)
    ps = T.sum(axis=0, keepdims=True)
    nz = T > 0
    return float(np.sum(T[nz] * np.log(T[nz] / (px @ ps)[nz])))


def best_stock_entropy(market):
    """Entropy of the index of the best asset; ties go to the lowest index."""
    m_star = np.argmax(market.values, axis=1)
    dist = np.bincount(m_star, weights=market.probs, minlength=market.dim)
    return entropy(dist)


def fvsi_bounds(jm):
    """(I(X;S), H(m*)), both upper bounds on the value of S."""
    return mutual_information(jm), best_stock_entropy(jm.x_marginal())


def _check_kernel(kernel, K):
    W = np.asarray(kernel, dtype=float)
    if W.ndim != 2 or W.shape[0] < K:
        raise InvalidInputError(f"kernel must have at least {K} rows")
    if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidInputError("kernel rows must be probability vectors")
    return W / W.sum(axis=1, keepdims=True)


def garble_si(jm, kernel):
    """Pass S through a stochastic kernel: p(x, z) = sum_s p(x, s) kernel[s, z]."""
    W = _check_kernel(kernel, jm.K)
    b = jm.base
    rows, probs, labels = [], [], []
    for z in range(W.shape[1]):
        w = W[b.si - 1, z] * b.probs
        keep = w > 0
        rows.append(b.values[keep])
        probs.append(w[keep])
        labels.append(np.full(int(keep.sum()), z + 1))
    p = np.concatenate(probs)
    return JointMarket.from_atoms(np.vstack(rows), p / p.sum(), np.concatenate(labels), W.shape[1])


def garble_labels(samples, kernel, seed):
    """Sample a garbled label for each period of ``samples``."""
    if not samples.has_si:
        raise InvalidInputError("samples carry no SI labels")
    W = _check_kernel(kernel, samples.K)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(W, axis=1)
    u = rng.random(samples.N)
    z = np.array([np.searchsorted(cdf[s - 1], ui, side="right") for s, ui in zip(samples.si_labels, u)])
    z = np.minimum(z, W.shape[1] - 1) + 1
    return samples.with_si(z, W.shape[1])


@dataclass(frozen=True)
class ConvexityReport:
    t_grid: tuple
    growth: tuple
    chord: tuple
    max_violation: float
    holds: bool


def _x_marginal_map(jm):
    m = jm.x_marginal()
    return {tuple(v): p for v, p in zip(m.values.tolist(), m.probs)}


def convexity_probe(jm1, jm2, t_grid=None, tol=1e-9, solver_tol=1e-12):
    """SI-aided growth along the segment between two joint laws versus its chord."""
    if t_grid is None:
        t_grid = np.linspace(0.0, 1.0, 11)
    m1, m2 = _x_marginal_map(jm1), _x_marginal_map(jm2)
    if set(m1) != set(m2) or any(abs(m1[x] - m2[x]) > 1e-10 for x in m1):
        raise InvalidInputError("joint markets have different stock marginals")
    K = max(jm1.K, jm2.K)
    s1 = np.pad(jm1.si_marginal, (0, K - jm1.K))
    s2 = np.pad(jm2.si_marginal, (0, K - jm2.K))
    if np.max(np.abs(s1 - s2)) > 1e-10:
        raise InvalidInputError("joint markets have different SI marginals")
    g1 = solve_conditional_portfolios(jm1, solver_tol).aided_growth
    g2 = solve_conditional_portfolios(jm2, solver_tol).aided_growth
    growth, chord = [], []
    for t in t_grid:
        t = float(t)
        if t == 1.0:
            g = g1
        elif t == 0.0:
            g = g2
        else:
            g = solve_conditional_portfolios(jm1.mixed(jm2, t), solver_tol).aided_growth
        growth.append(g)
        chord.append(t * g1 + (1.0 - t) * g2)
    viol = max(g - c for g, c in zip(growth, chord))
    return ConvexityReport(tuple(float(t) for t in t_grid), tuple(growth), tuple(chord),
                           float(viol), viol <= tol)
