"""A test for whether side information could raise the growth rate.

If S carries no financial value, the unconditional log-optimal portfolio b*
stays optimal in every SI state, so the per-state averages of X_m / b*.X
should all be close to one. The statistic T sums the squared deviations; a
gamma-tail bound on T under independent i.i.d. SI sets the threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._validation import InvalidInputError, dec, dec_list
from .growth import (
    Portfolio,
    solve_log_optimal,
    solve_log_optimal_short,
    solve_utility_optimal,
)
from .market import empirical_market

__all__ = [
    "SiTestReport",
    "si_test_statistic",
    "si_test_statistic_gen",
    "theta_bound",
    "false_alarm_bound",
    "choose_threshold",
    "run_si_test",
    "SI_USEFUL",
    "SI_NOT_USEFUL",
]

SI_USEFUL = "si_useful"
SI_NOT_USEFUL = "si_not_useful"


@dataclass
class SiTestReport:
    T: float
    components: np.ndarray  # (len(active), len(states))
    active: tuple
    states: tuple
    per_k_counts: np.ndarray  # N_k for k = 1..K, zeros included
    variant: str = "log"
    alpha: float | None = None
    tau: float | None = None
    theta: float | None = None
    false_alarm_bound: float | None = None
    decision: str | None = None
    per_cell_tau: float | None = None
    per_cell_decisions: np.ndarray | None = None
    bstar: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def N(self):
        return int(self.per_k_counts.sum())

    def to_dict(self):
        d = {
            "variant": self.variant,
            "T": dec(self.T),
            "components": [dec_list(row) for row in self.components],
            "active": [int(m) for m in self.active],
            "states": [int(k) for k in self.states],
            "per_k_counts": [int(n) for n in self.per_k_counts],
            "N": self.N,
        }
        if self.alpha is not None:
            d["alpha"] = dec(self.alpha)
        if self.bstar is not None:
            d["bstar"] = dec_list(self.bstar)
        for key in ("tau", "theta", "false_alarm_bound", "per_cell_tau"):
            v = getattr(self, key)
            if v is not None:
                d[key] = dec(v)
        if self.decision is not None:
            d["decision"] = self.decision
        if self.per_cell_decisions is not None:
            d["per_cell_decisions"] = [
                [SI_USEFUL if x else SI_NOT_USEFUL for x in row] for row in self.per_cell_decisions
            ]
        d.update(self.extra)
        return d


def _weights(b):
    return b.weights if isinstance(b, Portfolio) else np.asarray(b, dtype=float).ravel()


def _groups(samples):
    if not samples.has_si:
        raise InvalidInputError("samples carry no SI labels")
    counts = np.bincount(samples.si_labels, minlength=samples.K + 1)[1:]
    states = tuple(int(k) for k in np.flatnonzero(counts) + 1)
    empty = [k for k in range(1, samples.K + 1) if counts[k - 1] == 0]
    if empty:
        warnings.warn(f"SI states {empty} have no samples and are dropped", RuntimeWarning, stacklevel=3)
    return counts, states


def _active(active, dim):
    a = tuple(int(m) for m in active)
    if not a:
        raise InvalidInputError("active set is empty")
    if min(a) < 0 or max(a) >= dim:
        raise InvalidInputError(f"active indices must lie in 0..{dim - 1}")
    return a


def _cell_stats(samples, terms, active, states):
    """Squared per-state means of ``terms`` (N x d) over the active columns."""
    comp = np.empty((len(active), len(states)))
    for j, k in enumerate(states):
        mask = samples.si_labels == k
        mean = terms[mask][:, list(active)].mean(axis=0)
        comp[:, j] = mean**2
    return comp


def si_test_statistic(samples, bstar, active):
    """T = sum over active m and states k of |mean_{n in k} X_m / b*.X - 1|^2."""
    w = _weights(bstar)
    if w.size != samples.dim:
        raise InvalidInputError("bstar dimension does not match the samples")
    act = _active(active, samples.dim)
    counts, states = _groups(samples)
    s = samples.samples @ w
    if np.any(s <= 0):
        n = int(np.flatnonzero(s <= 0)[0])
        raise InvalidInputError(f"b*.X = 0 in period {n}")
    ratios = samples.samples / s[:, None] - 1.0
    comp = _cell_stats(samples, ratios, act, states)
    return SiTestReport(float(comp.sum()), comp, act, states, counts, bstar=w)


def si_test_statistic_gen(samples, bstar, active, alpha):
    """General-utility statistic with u'(x) = x^(alpha - 1)."""
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    w = _weights(bstar)
    if w.size != samples.dim:
        raise InvalidInputError("bstar dimension does not match the samples")
    act = _active(active, samples.dim)
    counts, states = _groups(samples)
    s = samples.samples @ w
    if alpha < 1 and np.any(s <= 0):
        n = int(np.flatnonzero(s <= 0)[0])
        raise InvalidInputError(f"b*.X = 0 in period {n}; u' is singular there")
    uprime = np.ones_like(s) if alpha == 1 else s ** (alpha - 1.0)
    terms = uprime[:, None] * (samples.samples - s[:, None])
    comp = _cell_stats(samples, terms, act, states)
    return SiTestReport(float(comp.sum()), comp, act, states, counts, variant="general",
                        alpha=alpha, bstar=w)


def theta_bound(N, si_marginal, bstar, active):
    """Per-term variance bound (1 / (N min_k P[S=k])) (1 / min_{m in A} b_m^2 - 1)."""
    q = np.asarray(si_marginal, dtype=float).ravel()
    w = _weights(bstar)
    act = _active(active, w.size)
    pmin = float(q.min())
    bmin = float(np.min(np.abs(w[list(act)])))
    if pmin <= 0:
        raise InvalidInputError("every SI state needs positive probability")
    if bmin <= 0:
        raise InvalidInputError("minimum active weight is zero")
    return (1.0 / (N * pmin)) * (1.0 / bmin**2 - 1.0)


def _shape(M, K):
    return (M + 1) * K / 2.0


def false_alarm_bound(tau, theta, M, K):
    """1 - P(s, tau/theta) with s = (M+1)K/2 and P the regularized lower incomplete gamma."""
    if not tau > 0 or not theta > 0:
        raise InvalidInputError("tau and theta must be positive")
    return float(min(1.0, max(0.0, special.gammaincc(_shape(M, K), tau / theta))))


def choose_threshold(target_fa, theta, M, K):
    """Smallest tau whose false-alarm bound is at most ``target_fa``."""
    if not 0 < target_fa < 1:
        raise InvalidInputError("target false-alarm rate must lie in (0, 1)")
    if not theta > 0:
        raise InvalidInputError("theta must be positive")
    s = _shape(M, K)
    tau = theta * float(special.gammainccinv(s, target_fa))
    # step up by ulps until the bound is met exactly
    while tau <= 0 or false_alarm_bound(tau, theta, M, K) > target_fa:
        tau = np.nextafter(max(tau, 0.0), math.inf)
    return float(tau)


def run_si_test(samples, target_fa=0.05, *, variant="log", alpha=None, split=False,
                tol=1e-12, max_iter=100_000):
    """Fit b*, bound the null variance, pick tau, and decide.

    ``variant`` is ``"log"``, ``"short"`` (short selling; every asset is
    tested) or ``"general"`` (power utility with exponent ``alpha``). With
    ``split`` the portfolio is fit on the first half and tested on the second.
    """
    if not samples.has_si:
        raise InvalidInputError("samples carry no SI labels")
    if variant not in ("log", "short", "general"):
        raise InvalidInputError(f"unknown variant {variant!r}")
    if variant == "general" and alpha is None:
        raise InvalidInputError("general variant needs alpha")
    fit_set, test_set = samples.split(samples.N // 2) if split else (samples, samples)
    market = empirical_market(fit_set.without_si())
    if variant == "log":
        rep = solve_log_optimal(market, tol=tol, max_iter=max_iter)
    elif variant == "short":
        rep = solve_log_optimal_short(market, tol=tol, max_iter=max_iter)
    else:
        rep = solve_utility_optimal(market, alpha, tol=tol, max_iter=max_iter)
    active = rep.active_set
    if variant == "general":
        report = si_test_statistic_gen(test_set, rep.portfolio, active, alpha)
    else:
        report = si_test_statistic(test_set, rep.portfolio, active)
        report.variant = variant
    N = test_set.N
    states = report.states
    si_marginal = report.per_k_counts[[k - 1 for k in states]] / N
    M = samples.dim - 1
    K = len(states)
    theta = theta_bound(N, si_marginal, rep.portfolio, active)
    if theta > 0:
        tau = choose_threshold(target_fa, theta, M, K)
        fa = false_alarm_bound(tau, theta, M, K)
    else:
        # a lone active asset at full weight: every ratio is exactly one under the null
        tau, fa = 0.0, 0.0
    report.theta = theta
    report.tau = tau
    report.false_alarm_bound = fa
    report.decision = SI_USEFUL if report.T > tau else SI_NOT_USEFUL
    report.per_cell_tau = tau / ((M + 1) * K)
    report.per_cell_decisions = report.components > report.per_cell_tau
    report.extra = {
        "target_fa": dec(target_fa),
        "split": bool(split),
        "solver_converged": rep.converged,
        "solver_kkt_gap": dec(rep.kkt_gap),
    }
    return report
