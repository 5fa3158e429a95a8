"""Input validation and decimal-text encoding shared across modules."""

from __future__ import annotations

import math

import numpy as np

SIMPLEX_ATOL = 1e-9


class InvalidInputError(ValueError):
    """Raised when user-supplied data violates a documented precondition."""


def check_price_relatives(X, *, allow_empty=False, name="X"):
    """Return ``X`` as a 2-D float array of nonnegative price relatives.

    Rows are rebalancing periods, columns are assets.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
    if X.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0 and not allow_empty:
        raise InvalidInputError(f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise InvalidInputError(f"{name} row {bad} has a non-finite entry")
    neg = np.flatnonzero((X < 0).any(axis=1))
    if neg.size:
        raise InvalidInputError(f"{name} row {int(neg[0])} has a negative price relative")
    return X


def check_simplex(b, *, atol=SIMPLEX_ATOL, name="weights"):
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if np.any(b < -atol) or abs(b.sum() - 1.0) > atol:
        raise InvalidInputError(f"{name} is not on the probability simplex: {b.tolist()}")
    return b


def check_positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise InvalidInputError(f"{name} must be positive, got {x.tolist()}")
    return x


def dec(x):
    """Fixed 17-significant-digit decimal text for a real."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dec_list(xs):
    return [dec(x) for x in np.asarray(xs, dtype=float).ravel()]


def undec(s):
    return float(s)
