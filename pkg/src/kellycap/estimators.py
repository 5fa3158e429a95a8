"""scikit-learn style wrappers around the solvers.

Rows of ``X`` are rebalancing periods and columns are assets, so these
estimators drop into pipelines and ``get_params``/``set_params`` tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import InvalidInputError, check_price_relatives
from .channel import ergodic_capacity, solve_power_allocation
from .growth import (
    solve_log_optimal,
    solve_log_optimal_short,
    solve_utility_optimal,
    wealth_trajectory,
)
from .market import DiscreteMarket, SampleSet, discretize_si, empirical_market, quantile_bins
from .si_test import run_si_test


def _market(X, sample_weight=None):
    X = check_price_relatives(check_array(X, dtype=float, ensure_all_finite=True))
    if sample_weight is None:
        return empirical_market(SampleSet(X))
    w = np.asarray(sample_weight, dtype=float).ravel()
    if w.shape[0] != X.shape[0] or np.any(w < 0) or w.sum() <= 0:
        raise InvalidInputError("sample_weight must be nonnegative with one entry per row")
    return DiscreteMarket.from_atoms(X, w / w.sum())


class LogOptimalPortfolio(BaseEstimator):
    """Constantly rebalanced portfolio maximizing expected utility of wealth.

    Parameters
    ----------
    alpha : float or None
        None for log utility; otherwise the exponent of the power utility
        (x^alpha - 1)/alpha, 0 < alpha <= 1.
    allow_short : bool
        Drop the nonnegativity constraint (log utility only).
    tol, max_iter
        KKT-gap tolerance and iteration cap.
    """

    def __init__(self, alpha=None, allow_short=False, tol=1e-9, max_iter=100_000):
        self.alpha = alpha
        self.allow_short = allow_short
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        market = _market(X, sample_weight)
        if self.allow_short and self.alpha is not None:
            raise InvalidInputError("short selling is only supported for log utility")
        if self.allow_short:
            rep = solve_log_optimal_short(market, self.tol, self.max_iter)
        elif self.alpha is None:
            rep = solve_log_optimal(market, self.tol, self.max_iter)
        else:
            rep = solve_utility_optimal(market, self.alpha, self.tol, self.max_iter)
        self.report_ = rep
        self.weights_ = np.array(rep.weights)
        self.growth_rate_ = rep.growth_rate
        self.kkt_gap_ = rep.kkt_gap
        self.active_set_ = rep.active_set
        self.n_iter_ = rep.iterations
        self.n_features_in_ = market.dim
        return self

    def predict(self, X):
        """Per-period portfolio return b.x."""
        check_is_fitted(self)
        X = check_price_relatives(check_array(X, dtype=float))
        return X @ self.weights_

    def transform(self, X):
        """Wealth path S_1..S_N starting from unit wealth."""
        check_is_fitted(self)
        X = check_price_relatives(check_array(X, dtype=float))
        return wealth_trajectory(SampleSet(X), self.weights_)

    def score(self, X, y=None):
        """Average log return per period."""
        r = self.predict(X)
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(r)))


class PowerAllocator(BaseEstimator):
    """Ergodic-capacity-optimal power shares for observed branch gains."""

    def __init__(self, rho=1.0, tol=1e-12, max_iter=100_000):
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, G, y=None):
        gains = _market(G)
        res = solve_power_allocation(gains, self.rho, self.tol, self.max_iter)
        self.allocation_ = np.array(res.allocation.fractions)
        self.capacity_ = res.capacity
        self.n_features_in_ = gains.dim
        return self

    def score(self, G, y=None):
        check_is_fitted(self)
        return ergodic_capacity(_market(G), self.allocation_, self.rho)


class SideInfoQuantizer(TransformerMixin, BaseEstimator):
    """Equal-population quantization of a continuous SI signal into 1..n_states."""

    def __init__(self, n_states=2):
        self.n_states = n_states

    def fit(self, values, y=None):
        v = np.asarray(values, dtype=float).ravel()
        discretize_si(v, self.n_states)  # validates
        self.edges_ = quantile_bins(v, self.n_states)
        return self

    def transform(self, values):
        check_is_fitted(self)
        v = np.asarray(values, dtype=float).ravel()
        return 1 + np.searchsorted(self.edges_, v, side="left")


class SideInfoTest(BaseEstimator):
    """Test whether SI labels could improve the growth-optimal portfolio."""

    def __init__(self, target_fa=0.05, variant="log", alpha=None, split=False, tol=1e-12,
                 max_iter=100_000):
        self.target_fa = target_fa
        self.variant = variant
        self.alpha = alpha
        self.split = split
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, s):
        X = check_price_relatives(check_array(X, dtype=float))
        rep = run_si_test(SampleSet(X, np.asarray(s)), self.target_fa, variant=self.variant,
                          alpha=self.alpha, split=self.split, tol=self.tol,
                          max_iter=self.max_iter)
        self.report_ = rep
        self.statistic_ = rep.T
        self.threshold_ = rep.tau
        self.decision_ = rep.decision
        return self
