"""Fractional Kelly portfolios as power allocation over fading branches.

With a fraction ``lam`` of wealth held in cash, the remaining risky
sub-portfolio ``btilde`` maximizes E[log(1 + rho * btilde.X)] with
``rho = (1 - lam) / lam``. That is the ergodic capacity of a receive-diversity
channel whose power gains are X and whose per-branch power shares are
``btilde``, at average SNR ``rho``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _simplex
from ._validation import InvalidInputError, dec, dec_list
from .growth import LN2, Portfolio, SolveReport, growth_rate, solve_log_optimal
from .market import DiscreteMarket, ExponentialGains

__all__ = [
    "FractionalKellySpec",
    "PowerAllocation",
    "QuadratureError",
    "fractional_kelly_growth",
    "ergodic_capacity",
    "solve_power_allocation",
    "solve_fractional_kelly",
    "water_fill",
    "equiprobable_horse_race",
    "capacity_sweep",
]

QUAD_RTOL = 1e-8


class QuadratureError(ArithmeticError):
    def __init__(self, msg, achieved):
        super().__init__(msg)
        self.achieved = achieved


@dataclass(frozen=True)
class FractionalKellySpec:
    """Cash fraction ``lam`` in [0, 1] and the equivalent SNR ``rho``."""

    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"cash fraction must lie in [0, 1], got {self.lam}")

    @classmethod
    def from_rho(cls, rho):
        if rho < 0:
            raise InvalidInputError("rho must be nonnegative")
        return cls(1.0 / (1.0 + rho))

    @property
    def rho(self):
        if self.lam == 0.0:
            return math.inf
        return (1.0 - self.lam) / self.lam


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Per-branch power shares rho_m / rho (equivalently, btilde)."""

    fractions: np.ndarray

    def __post_init__(self):
        f = np.array(self.fractions, dtype=float).ravel()
        if f.size == 0 or np.any(f < -1e-12) or abs(f.sum() - 1.0) > 1e-10:
            raise InvalidInputError(f"power shares must lie on the simplex: {f.tolist()}")
        f = np.clip(f, 0.0, None)
        f.setflags(write=False)
        object.__setattr__(self, "fractions", f)

    @classmethod
    def uniform(cls, M):
        return cls(np.full(M, 1.0 / M))

    def to_dict(self):
        return {"fractions": dec_list(self.fractions)}


@dataclass(frozen=True)
class FractionalKellyValue:
    objective: float  # E[log(1 + rho btilde.X)]
    growth: float  # objective + log(lam)


@dataclass(frozen=True, eq=False)
class AllocationResult:
    allocation: PowerAllocation
    capacity: float
    rho: float
    iterations: int = 0
    kkt_gap: float = 0.0
    converged: bool = True
    water_level: float | None = None

    @property
    def capacity_bits(self):
        return self.capacity / LN2

    def to_dict(self):
        d = {
            "rho": dec(self.rho),
            "allocation": dec_list(self.allocation.fractions),
            "capacity": dec(self.capacity),
            "capacity_bits": dec(self.capacity_bits),
            "iterations": self.iterations,
            "kkt_gap": dec(self.kkt_gap),
            "converged": self.converged,
        }
        if self.water_level is not None:
            d["water_level"] = dec(self.water_level)
        return d


def _fractions(a):
    return a.fractions if isinstance(a, PowerAllocation) else np.asarray(a, dtype=float).ravel()


def fractional_kelly_growth(risky, spec, btilde):
    """Objective E[log(1 + rho btilde.X)] and full growth rate including log(lam)."""
    if spec.lam <= 0:
        raise InvalidInputError("lam = 0 has no cash; use growth_rate directly")
    w = _fractions(btilde)
    if w.size != risky.dim:
        raise InvalidInputError(f"btilde has {w.size} entries, market has {risky.dim} risky assets")
    obj = float(risky.probs @ np.log1p(spec.rho * (risky.values @ w)))
    return FractionalKellyValue(obj, obj + math.log(spec.lam))


def _exp_scales(gains, a, rho):
    return rho * a * gains.means


def _laplace_product(s, c):
    return np.exp(-np.sum(np.log1p(np.multiply.outer(s, c)), axis=-1))


def _quad(f, what):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-11, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: quadrature did not converge ({exc})", math.nan) from None
    if err > QUAD_RTOL * abs(val) + 1e-15:
        raise QuadratureError(f"{what}: achieved error {err:.3g} exceeds tolerance", err / abs(val))
    return val


def _quad_vec(f, what):
    val, err = integrate.quad_vec(f, 0.0, np.inf, epsabs=1e-15, epsrel=1e-11, limit=2000)
    if err > QUAD_RTOL * max(float(np.max(np.abs(val))), 1e-300) + 1e-14:
        raise QuadratureError(f"{what}: achieved error {err:.3g} exceeds tolerance", err)
    return val


def _exp_capacity(gains, a, rho):
    # log(1+z) = int_0^inf (1 - e^{-sz}) e^{-s} / s ds, and the Laplace transform of
    # a sum of independent exponentials is a product of 1/(1 + s c_m).
    c = _exp_scales(gains, a, rho)
    if not np.any(c > 0):
        return 0.0

    def integrand(s):
        if s == 0.0:
            return float(c.sum())
        return -math.expm1(-float(np.sum(np.log1p(s * c)))) * math.exp(-s) / s

    return _quad(integrand, "ergodic capacity")


class ExponentialCapacityObjective:
    """Ergodic capacity with exponential gains, its gradient and Hessian by 1-D quadrature."""

    def __init__(self, gains, rho):
        self.gains, self.rho = gains, rho

    def value(self, a):
        return _exp_capacity(self.gains, a, self.rho)

    def grad(self, a):
        mu, rho = self.gains.means, self.rho
        c = _exp_scales(self.gains, a, rho)

        def f(s):
            return rho * math.exp(-s) * _laplace_product(s, c) * mu / (1.0 + s * c)

        return _quad_vec(f, "capacity gradient")

    def hess(self, a):
        mu, rho = self.gains.means, self.rho
        c = _exp_scales(self.gains, a, rho)
        twice = 1.0 + np.eye(mu.size)

        def f(s):
            v = mu / (1.0 + s * c)
            return -rho**2 * s * math.exp(-s) * _laplace_product(s, c) * np.outer(v, v) * twice

        return _quad_vec(f, "capacity Hessian")


def ergodic_capacity(gains, alloc, rho):
    """E[log(1 + rho * sum_m alloc_m g_m)] in nats."""
    if rho < 0:
        raise InvalidInputError("rho must be nonnegative")
    a = _fractions(alloc)
    if a.size != gains.dim:
        raise InvalidInputError(f"allocation has {a.size} entries, gains have {gains.dim} branches")
    if rho == 0:
        return 0.0
    if isinstance(gains, ExponentialGains):
        return _exp_capacity(gains, a, rho)
    return float(gains.probs @ np.log1p(rho * (gains.values @ a)))


def _shifted_market(gains, rho):
    # 1 + rho btilde.x = btilde.(1 + rho x) on the simplex
    return DiscreteMarket(1.0 + rho * gains.values, gains.probs)


def solve_power_allocation(gains, rho, tol=1e-12, max_iter=100_000):
    """Capacity-maximizing power shares at total SNR ``rho``.

    Discrete gains are solved as a log-optimal portfolio on the market
    ``1 + rho * X``; exponential gains by Newton steps on quadrature values.
    """
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    if isinstance(gains, ExponentialGains):
        obj = ExponentialCapacityObjective(gains, rho)
        res = _simplex.maximize(obj, np.full(gains.dim, 1.0 / gains.dim),
                                tol=max(tol, 1e-9), max_iter=max_iter)
        a = np.clip(res.b, 0.0, None)
        a /= a.sum()
        return AllocationResult(PowerAllocation(a), obj.value(a), rho, res.iterations,
                                res.gap, res.converged)
    rep = solve_log_optimal(_shifted_market(gains, rho), tol=tol, max_iter=max_iter)
    return AllocationResult(PowerAllocation(rep.weights), rep.growth_rate, rho,
                            rep.iterations, rep.kkt_gap, rep.converged)


class _WealthObjective:
    """E[log(lam + (1 - lam) btilde.X)], the fractional Kelly wealth form."""

    def __init__(self, X, p, lam):
        self.X, self.p, self.lam = X, p, lam

    def value(self, b):
        w = self.lam + (1.0 - self.lam) * (self.X @ b)
        return float(self.p @ np.log(w))

    def grad(self, b):
        w = self.lam + (1.0 - self.lam) * (self.X @ b)
        return (1.0 - self.lam) * ((self.p / w) @ self.X)

    def hess(self, b):
        w = self.lam + (1.0 - self.lam) * (self.X @ b)
        return -((1.0 - self.lam) ** 2) * (self.X * (self.p / w**2)[:, None]).T @ self.X


def solve_fractional_kelly(risky, spec, tol=1e-12, max_iter=100_000):
    """Best risky sub-portfolio with cash fraction ``spec.lam`` held fixed.

    Returns a SolveReport on the cash-augmented market ``[1, X]`` with
    weights ``[lam, (1 - lam) btilde]``; ``objective`` holds the Kelly
    objective E[log(1 + rho btilde.X)].
    """
    lam = spec.lam
    if not 0 < lam < 1:
        raise InvalidInputError("fractional Kelly needs 0 < lam < 1")
    obj = _WealthObjective(risky.values, risky.probs, lam)
    res = _simplex.maximize(obj, np.full(risky.dim, 1.0 / risky.dim), tol=tol, max_iter=max_iter)
    bt = np.clip(res.b, 0.0, None)
    bt /= bt.sum()
    full = np.concatenate([[lam], (1.0 - lam) * bt])
    full /= full.sum()
    fk = fractional_kelly_growth(risky, spec, bt)
    r_tilde = _simplex.normalized_residuals(bt, obj.grad(bt))
    return SolveReport(
        portfolio=Portfolio(full),
        growth_rate=growth_rate(risky.with_cash(), full),
        iterations=res.iterations,
        kkt_gap=_simplex.kkt_gap(bt, r_tilde),
        active_set=tuple(int(m) for m in np.flatnonzero(bt > _simplex.ACTIVE_THRESHOLD)),
        residuals=r_tilde,
        converged=res.converged,
        objective=fk.objective,
        history=res.history,
    )


def water_fill(gains, rho):
    """Closed-form capacity-optimal shares for an equiprobable horse race.

    ``btilde_m = max(0, nu - 1/(rho x_m))`` with the water level ``nu`` making
    the shares sum to one.
    """
    x = np.asarray(gains, dtype=float).ravel()
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    if x.size == 0 or np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise InvalidInputError("gains must be positive")
    floor = 1.0 / (rho * x)

    def excess(nu):
        return float(np.sum(np.clip(nu - floor, 0.0, None))) - 1.0

    lo = float(floor.min())
    hi = lo + 1.0
    while excess(hi) < 0:
        hi = lo + 2.0 * (hi - lo)
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    # pin nu exactly on the identified active set
    active = floor < nu
    nu = float((1.0 + floor[active].sum()) / active.sum())
    share = np.where(active, nu - floor, 0.0)
    share = np.clip(share, 0.0, None)
    share /= share.sum()
    cap = float(np.mean(np.log1p(rho * share * x)))
    return AllocationResult(PowerAllocation(share), cap, rho, water_level=nu)


def equiprobable_horse_race(gains):
    """Gains with exactly one active branch per period, each with probability 1/M."""
    x = np.asarray(gains, dtype=float).ravel()
    return DiscreteMarket(np.diag(x), np.full(x.size, 1.0 / x.size))


def capacity_sweep(gains, rho_grid, alloc=None, tol=1e-12, max_iter=100_000):
    """Capacity versus rho: optimal shares at each rho, or a fixed ``alloc``."""
    rows = []
    for rho in rho_grid:
        rho = float(rho)
        if alloc is not None:
            a = PowerAllocation(_fractions(alloc))
            rows.append(AllocationResult(a, ergodic_capacity(gains, a, rho), rho))
        elif rho == 0:
            a = PowerAllocation.uniform(gains.dim)
            rows.append(AllocationResult(a, 0.0, rho))
        else:
            rows.append(solve_power_allocation(gains, rho, tol=tol, max_iter=max_iter))
    return rows
