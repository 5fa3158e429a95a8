"""Growth rate of constantly rebalanced portfolios and its maximization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _simplex
from ._simplex import ACTIVE_THRESHOLD
from ._validation import InvalidInputError, dec, dec_list

__all__ = [
    "Portfolio",
    "SolveReport",
    "InfeasibleMarketError",
    "UnboundedGrowthError",
    "ConvergenceWarning",
    "growth_rate",
    "wealth_trajectory",
    "kkt_residuals",
    "utility_residuals",
    "multiplicative_update",
    "solve_log_optimal",
    "solve_log_optimal_short",
    "solve_utility_optimal",
]

LN2 = math.log(2.0)


class InfeasibleMarketError(ValueError):
    """No portfolio attains a finite growth rate."""


class UnboundedGrowthError(ArithmeticError):
    """The objective grows without bound along ``direction``."""

    def __init__(self, msg, direction):
        super().__init__(msg)
        self.direction = np.asarray(direction, dtype=float)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Portfolio:
    """Rebalancing weights b_0..b_M summing to one."""

    weights: np.ndarray
    allow_short: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise InvalidInputError("portfolio weights must be finite and nonempty")
        if abs(w.sum() - 1.0) > 1e-10:
            raise InvalidInputError(f"portfolio weights sum to {w.sum()!r}, not 1")
        if not self.allow_short:
            if np.any(w < -1e-12):
                raise InvalidInputError(f"negative weight without short selling: {w.tolist()}")
            w = np.clip(w, 0.0, None)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, d):
        return cls(np.full(d, 1.0 / d))

    @classmethod
    def vertex(cls, d, m):
        w = np.zeros(d)
        w[m] = 1.0
        return cls(w)

    def __len__(self):
        return self.weights.size

    def to_dict(self):
        return {"weights": dec_list(self.weights), "allow_short": self.allow_short}


def _weights(b):
    return b.weights if isinstance(b, Portfolio) else np.asarray(b, dtype=float).ravel()


def _check_dims(market_dim, b):
    if b.size != market_dim:
        raise InvalidInputError(f"portfolio has {b.size} weights, market has {market_dim} assets")


@dataclass(frozen=True, eq=False)
class SolveReport:
    portfolio: Portfolio
    growth_rate: float
    iterations: int
    kkt_gap: float
    active_set: tuple
    residuals: np.ndarray
    converged: bool = True
    objective: float | None = None
    history: list = field(default_factory=list, repr=False)

    @property
    def weights(self):
        return self.portfolio.weights

    @property
    def growth_rate_bits(self):
        return self.growth_rate / LN2

    def to_dict(self):
        return {
            "weights": dec_list(self.weights),
            "allow_short": self.portfolio.allow_short,
            "growth_rate": dec(self.growth_rate),
            "growth_rate_bits": dec(self.growth_rate_bits),
            "objective": dec(self.growth_rate if self.objective is None else self.objective),
            "iterations": self.iterations,
            "kkt_gap": dec(self.kkt_gap),
            "active_set": [int(m) for m in self.active_set],
            "residuals": dec_list(self.residuals),
            "converged": self.converged,
        }


def growth_rate(market, b):
    """Expected log return E[log b.X] in nats; ``-inf`` when some atom is wiped out."""
    w = _weights(b)
    _check_dims(market.dim, w)
    s = market.values @ w
    if np.any(s <= 0):
        return -math.inf
    return float(market.probs @ np.log(s))


def wealth_trajectory(samples, b):
    """Wealth S_1..S_N of the constantly rebalanced portfolio from S_0 = 1."""
    w = _weights(b)
    _check_dims(samples.dim, w)
    return np.cumprod(samples.samples @ w)


def kkt_residuals(market, b):
    """E[X_m / b.X] for every asset m."""
    w = _weights(b)
    _check_dims(market.dim, w)
    s = market.values @ w
    if np.any(s <= 0):
        bad = int(np.flatnonzero(s <= 0)[0])
        raise InvalidInputError(f"b.x = 0 on atom {bad} with positive probability")
    return (market.probs / s) @ market.values


def utility_residuals(market, b, alpha):
    """E[X_m u'(b.X)] / E[b.X u'(b.X)] for the power utility with exponent alpha."""
    w = _weights(b)
    _check_dims(market.dim, w)
    s = market.values @ w
    if alpha < 1 and np.any(s <= 0):
        raise InvalidInputError("b.x = 0 on an atom; u' is singular there")
    g = (market.probs * s ** (alpha - 1.0)) @ market.values
    return g / float(w @ g)


class LogObjective:
    def __init__(self, X, p):
        self.X, self.p = X, p

    def value(self, b):
        s = self.X @ b
        if np.any(s <= 0):
            return -math.inf
        return float(self.p @ np.log(s))

    def grad(self, b):
        return (self.p / (self.X @ b)) @ self.X

    def hess(self, b):
        s = self.X @ b
        return -(self.X * (self.p / s**2)[:, None]).T @ self.X


class PowerUtilityObjective:
    """E[((b.X)^alpha - 1) / alpha] for 0 < alpha < 1."""

    def __init__(self, X, p, alpha):
        self.X, self.p, self.alpha = X, p, alpha

    def value(self, b):
        s = self.X @ b
        if np.any(s <= 0):
            return -math.inf
        return float(self.p @ np.expm1(self.alpha * np.log(s)) / self.alpha)

    def grad(self, b):
        s = self.X @ b
        return (self.p * s ** (self.alpha - 1.0)) @ self.X

    def hess(self, b):
        s = self.X @ b
        wts = (self.alpha - 1.0) * self.p * s ** (self.alpha - 2.0)
        return (self.X * wts[:, None]).T @ self.X


def multiplicative_update(obj, b):
    """b_m <- b_m E[X_m / b.X]; stays on the simplex and never lowers the growth rate."""
    b_new = b * obj.grad(b)
    return b_new / b_new.sum()


def _projected_gradient(obj):
    state = {"eta": None}

    def step(b, f):
        g = obj.grad(b)
        eta = state["eta"] or 1.0 / max(float(np.max(np.abs(g))), 1e-300)
        for _ in range(80):
            trial = _simplex.project_simplex(b + eta * g)
            f_new = obj.value(trial)
            if f_new >= f + 1e-4 * float(g @ (trial - b)) and f_new >= f:
                state["eta"] = 2.0 * eta
                return trial, f_new
            eta *= 0.5
        return None

    return step


def _check_feasible(market):
    zero = np.flatnonzero(~(market.values > 0).any(axis=1))
    if zero.size:
        raise InfeasibleMarketError(
            f"atom {int(zero[0])} is identically zero; every portfolio has growth -inf"
        )


def _report(market, res, residuals_fn, objective=None, allow_short=False, tol=None):
    w = np.array(res.b)
    w[np.abs(w) < 1e-300] = 0.0
    port = Portfolio(w / w.sum(), allow_short=allow_short)
    r = residuals_fn(port.weights)
    gap = (float(np.max(np.abs(r - 1.0))) if allow_short
           else _simplex.kkt_gap(port.weights, r))
    active = tuple(int(m) for m in np.flatnonzero(port.weights > ACTIVE_THRESHOLD)) \
        if not allow_short else tuple(range(port.weights.size))
    converged = bool(res.converged and (tol is None or gap <= tol))
    if not converged:
        warnings.warn(
            f"solver stopped after {res.iterations} iterations with KKT gap {gap:.3g}",
            ConvergenceWarning,
            stacklevel=3,
        )
    return SolveReport(
        portfolio=port,
        growth_rate=growth_rate(market, port),
        iterations=res.iterations,
        kkt_gap=gap,
        active_set=active,
        residuals=r,
        converged=converged,
        objective=objective(port.weights) if objective is not None else None,
        history=res.history,
    )


def solve_log_optimal(market, tol=1e-9, max_iter=100_000, *, polish=True, warm_iters=20):
    """Maximize the growth rate over the simplex.

    Starts at the uniform portfolio and runs multiplicative updates; unless
    ``polish`` is off, an active-set Newton phase takes over after
    ``warm_iters`` updates. Convergence is declared on the KKT gap.
    """
    _check_feasible(market)
    X, p = market.values, market.probs
    obj = LogObjective(X, p)

    def mu_step(b, f):
        b_new = multiplicative_update(obj, b)
        return b_new, obj.value(b_new)

    b0 = np.full(market.dim, 1.0 / market.dim)
    res = _simplex.maximize(obj, b0, tol=tol, max_iter=max_iter, warm_step=mu_step,
                            warm_iters=warm_iters, polish=polish)
    return _report(market, res, lambda w: kkt_residuals(market, w), tol=tol)


def _unbounded_direction(market):
    """A sum-zero direction d with d.x >= 0 on every atom and > 0 somewhere, if any."""
    X, p = market.values, market.probs
    n = market.dim
    res = linprog(
        c=-(p @ X),
        A_ub=-X,
        b_ub=np.zeros(X.shape[0]),
        A_eq=np.ones((1, n)),
        b_eq=[0.0],
        bounds=[(-1.0, 1.0)] * n,
        method="highs",
    )
    scale = max(1.0, float(np.max(X)))
    if res.status == 0 and -res.fun > 1e-9 * scale:
        return res.x
    return None


def solve_log_optimal_short(market, tol=1e-9, max_iter=100_000, *, l1_limit=1e6):
    """Maximize the growth rate on the hyperplane sum(b) = 1 (short selling allowed)."""
    _check_feasible(market)
    d_unb = _unbounded_direction(market)
    if d_unb is not None:
        raise UnboundedGrowthError(
            "growth rate is unbounded under short selling", d_unb / np.abs(d_unb).sum()
        )
    X, p = market.values, market.probs
    obj = LogObjective(X, p)
    b = np.full(market.dim, 1.0 / market.dim)
    f = obj.value(b)
    history = [f]
    it = 0
    gap = float(np.max(np.abs(obj.grad(b) - 1.0)))
    converged = gap <= tol
    while not converged and it < max_iter:
        g = obj.grad(b)
        d = _simplex._newton_direction(g, obj.hess(b))
        slope = float(g @ d)
        if not slope > 0:
            break
        alpha = 1.0
        noise = 1e-15 * max(1.0, abs(f))
        for _ in range(80):
            trial = b + alpha * d
            f_new = obj.value(trial)
            if f_new >= f + 1e-4 * alpha * slope or (alpha * slope <= noise and f_new >= f - noise):
                break
            alpha *= 0.5
        else:
            break
        b, f = trial / trial.sum(), f_new
        history.append(f)
        it += 1
        if np.abs(b).sum() > l1_limit:
            raise UnboundedGrowthError("portfolio l1 norm exceeded the divergence guard",
                                       d / np.abs(d).sum())
        gap = float(np.max(np.abs(obj.grad(b) - 1.0)))
        converged = gap <= tol
    res = _simplex.SimplexResult(b, it, converged, gap, history)
    return _report(market, res, lambda w: kkt_residuals(market, w), allow_short=True, tol=tol)


def solve_utility_optimal(market, alpha, tol=1e-9, max_iter=100_000, *, polish=True, warm_iters=20):
    """Maximize E[u(b.X)] with u(x) = (x^alpha - 1)/alpha over the simplex."""
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    _check_feasible(market)
    X, p = market.values, market.probs
    if alpha == 1:
        means = market.mean()
        m = int(np.argmax(means))
        w = np.zeros(market.dim)
        w[m] = 1.0
        res = _simplex.SimplexResult(w, 0, True, 0.0, [])
        return _report(market, res, lambda v: utility_residuals(market, v, 1.0),
                       objective=lambda v: float(means @ v) - 1.0, tol=tol)
    obj = PowerUtilityObjective(X, p, alpha)
    b0 = np.full(market.dim, 1.0 / market.dim)
    res = _simplex.maximize(obj, b0, tol=tol, max_iter=max_iter, warm_step=_projected_gradient(obj),
                            warm_iters=warm_iters, polish=polish)
    return _report(market, res, lambda v: utility_residuals(market, v, alpha),
                   objective=obj.value, tol=tol)


def best_vertex_growth(market):
    """Largest growth rate among single-asset portfolios."""
    return max(growth_rate(market, Portfolio.vertex(market.dim, m)) for m in range(market.dim))
