"""Markets and channels as finite distributions or sample paths.

A :class:`SampleSet` is a time series of price-relative vectors with optional
per-period side-information labels. A :class:`DiscreteMarket` is a
finite-support joint distribution of a price-relative vector and an optional
side-information state; every expectation over it is an exact finite sum.
:class:`ExponentialGains` is the one parametric family, used for Rayleigh
fading power gains.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._validation import (
    InvalidInputError,
    check_positive,
    check_price_relatives,
    dec_list,
    undec,
)

__all__ = [
    "SampleSet",
    "DiscreteMarket",
    "ExponentialGains",
    "load_csv",
    "gen_horse_race",
    "gen_rayleigh_simo",
    "gen_independent_si",
    "winner_si",
    "empirical_market",
    "discretize_si",
    "quantile_bins",
    "quantize_exponential",
]


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N price-relative vectors, one per rebalancing period.

    Parameters
    ----------
    samples : array of shape (N, d)
        Price relatives, ``d = M + 1`` assets.
    si_labels : array of shape (N,), optional
        Side-information states in ``1..K``.
    K : int, optional
        Number of SI states; defaults to the largest label.
    """

    samples: np.ndarray
    si_labels: np.ndarray | None = None
    K: int | None = None

    def __post_init__(self):
        X = check_price_relatives(self.samples, allow_empty=True, name="samples")
        object.__setattr__(self, "samples", _frozen(X))
        if self.si_labels is None:
            if self.K is not None:
                raise InvalidInputError("K given without si_labels")
            return
        s = np.asarray(self.si_labels)
        if s.ndim != 1 or s.shape[0] != X.shape[0]:
            raise InvalidInputError(
                f"si_labels has length {s.shape[0] if s.ndim else 0}, expected {X.shape[0]}"
            )
        if s.size and not np.all(np.equal(np.mod(s, 1), 0)):
            raise InvalidInputError("si_labels must be integers")
        s = s.astype(np.int64)
        K = self.K if self.K is not None else (int(s.max()) if s.size else 0)
        if s.size and (s.min() < 1 or s.max() > K):
            raise InvalidInputError(f"si_labels must lie in 1..{K}")
        object.__setattr__(self, "si_labels", _frozen(s))
        object.__setattr__(self, "K", int(K))

    @property
    def N(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def has_si(self):
        return self.si_labels is not None

    def with_si(self, labels, K=None):
        return SampleSet(self.samples, labels, K)

    def without_si(self):
        return SampleSet(self.samples)

    def scaled(self, c):
        return SampleSet(self.samples * c, self.si_labels, self.K)

    def split(self, n_first):
        """Split into the first ``n_first`` periods and the rest."""
        s = self.si_labels
        head = SampleSet(self.samples[:n_first], None if s is None else s[:n_first],
                         self.K if s is not None else None)
        tail = SampleSet(self.samples[n_first:], None if s is None else s[n_first:],
                         self.K if s is not None else None)
        return head, tail

    def to_dict(self):
        d = {
            "type": "SampleSet",
            "N": self.N,
            "dim": self.dim,
            "samples": [dec_list(row) for row in self.samples],
        }
        if self.has_si:
            d["K"] = self.K
            d["si_labels"] = [int(k) for k in self.si_labels]
        return d

    @classmethod
    def from_dict(cls, d):
        X = np.array([[undec(v) for v in row] for row in d["samples"]], dtype=float)
        if X.size == 0:
            X = X.reshape(0, d.get("dim", 0))
        if "si_labels" in d:
            return cls(X, np.asarray(d["si_labels"], dtype=np.int64), d["K"])
        return cls(X)


@dataclass(frozen=True, eq=False)
class DiscreteMarket:
    """Finite-support distribution over price-relative vectors.

    Atoms are the rows of ``values`` with probabilities ``probs``; ``si``
    optionally tags each atom with a side-information state. Zero-probability
    atoms are dropped and exact duplicates (same vector and state) are merged.
    """

    values: np.ndarray
    probs: np.ndarray
    si: np.ndarray | None = None
    counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        V = check_price_relatives(self.values, name="atom values")
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.shape[0] != V.shape[0]:
            raise InvalidInputError("one probability per atom is required")
        if np.any(p < 0) or np.any(p > 1 + 1e-12) or not np.all(np.isfinite(p)):
            raise InvalidInputError("atom probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"atom probabilities sum to {p.sum()!r}, not 1")
        si = None if self.si is None else np.asarray(self.si).astype(np.int64).ravel()
        if si is not None and si.shape[0] != V.shape[0]:
            raise InvalidInputError("one si state per atom is required")
        if si is not None and si.min() < 1:
            raise InvalidInputError("si states must be >= 1")
        keep = p > 0
        V, p = V[keep], p[keep]
        si = None if si is None else si[keep]
        counts = None if self.counts is None else np.asarray(self.counts)[keep]
        object.__setattr__(self, "values", _frozen(V))
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "si", None if si is None else _frozen(si))
        object.__setattr__(self, "counts", None if counts is None else _frozen(counts))

    @classmethod
    def from_atoms(cls, values, probs, si=None):
        """Build a market merging exactly equal (vector, state) atoms."""
        V = np.asarray(values, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        p = np.asarray(probs, dtype=float).ravel()
        key = V if si is None else np.column_stack([V, np.asarray(si, dtype=float)])
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inv, p)
        merged = merged / merged.sum()
        if si is None:
            return cls(uniq, merged)
        return cls(uniq[:, :-1], merged, uniq[:, -1].astype(np.int64))

    @classmethod
    def point(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x.reshape(1, -1), [1.0])

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def n_atoms(self):
        return self.values.shape[0]

    @property
    def has_si(self):
        return self.si is not None

    @property
    def K(self):
        return int(self.si.max()) if self.si is not None else 1

    def mean(self):
        return self.probs @ self.values

    def expect(self, f):
        """E[f(x)] where ``f`` maps the (n_atoms, d) value matrix to (n_atoms,)."""
        return float(self.probs @ f(self.values))

    def marginal(self):
        """Drop SI and merge atoms with equal vectors."""
        if self.si is None:
            return self
        return DiscreteMarket.from_atoms(self.values, self.probs)

    def conditional(self, k):
        """Distribution of the vector given SI state ``k``."""
        if self.si is None:
            raise InvalidInputError("market carries no side information")
        mask = self.si == k
        if not mask.any():
            raise InvalidInputError(f"SI state {k} has zero probability")
        p = self.probs[mask]
        return DiscreteMarket.from_atoms(self.values[mask], p / p.sum())

    def permuted(self, perm):
        return DiscreteMarket(self.values[:, list(perm)], self.probs, self.si)

    def scaled(self, c):
        return DiscreteMarket(self.values * c, self.probs, self.si)

    def with_cash(self):
        """Prepend a risk-free asset with price relative 1."""
        V = np.column_stack([np.ones(self.n_atoms), self.values])
        return DiscreteMarket(V, self.probs, self.si)

    def to_dict(self):
        d = {
            "type": "DiscreteMarket",
            "dim": self.dim,
            "values": [dec_list(v) for v in self.values],
            "probs": dec_list(self.probs),
        }
        if self.si is not None:
            d["si"] = [int(k) for k in self.si]
        if self.counts is not None:
            d["counts"] = [int(c) for c in self.counts]
        return d

    @classmethod
    def from_dict(cls, d):
        V = np.array([[undec(v) for v in row] for row in d["values"]], dtype=float)
        p = np.array([undec(v) for v in d["probs"]])
        return cls(V, p, d.get("si"), d.get("counts"))


@dataclass(frozen=True, eq=False)
class ExponentialGains:
    """Independent exponential power gains |h_m|^2 (Rayleigh fading)."""

    means: np.ndarray

    def __post_init__(self):
        m = check_positive(np.atleast_1d(np.asarray(self.means, dtype=float)), "mean gains")
        object.__setattr__(self, "means", _frozen(m))

    @property
    def dim(self):
        return self.means.shape[0]

    def mean(self):
        return np.array(self.means)

    def to_dict(self):
        return {"type": "ExponentialGains", "means": dec_list(self.means)}


def quantize_exponential(mean, n_atoms):
    """Equal-probability atoms at the mid-quantiles of an exponential law."""
    u = (np.arange(n_atoms) + 0.5) / n_atoms
    x = stats.expon.ppf(u, scale=mean)
    return DiscreteMarket(x.reshape(-1, 1), np.full(n_atoms, 1.0 / n_atoms))


def _parse_real(text, row):
    try:
        return float(text)
    except ValueError:
        raise InvalidInputError(f"row {row}: cannot parse {text!r} as a real") from None


def load_csv(stream, si_column=None):
    """Read a SampleSet from CSV text.

    The header names the stock columns (in file order) and optionally one SI
    column. Rows are numbered from 1 after the header in error messages.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InvalidInputError("empty CSV: missing header row") from None
    si_idx = None
    if si_column is not None:
        if si_column not in header:
            raise InvalidInputError(f"SI column {si_column!r} not found in header")
        si_idx = header.index(si_column)
    n_stock = len(header) - (si_idx is not None)
    if n_stock < 1:
        raise InvalidInputError("CSV has no stock columns")
    rows, labels = [], []
    for i, rec in enumerate(reader, start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise InvalidInputError(f"row {i}: expected {len(header)} fields, got {len(rec)}")
        vals = []
        for j, cell in enumerate(rec):
            if j == si_idx:
                lab = _parse_real(cell, i)
                if lab <= 0 or not float(lab).is_integer():
                    raise InvalidInputError(f"row {i}: SI label {cell.strip()!r} is not a positive integer")
                labels.append(int(lab))
            else:
                v = _parse_real(cell, i)
                if not np.isfinite(v) or v < 0:
                    raise InvalidInputError(f"row {i}: price relative {cell.strip()!r} is negative or non-finite")
                vals.append(v)
        if not any(v > 0 for v in vals):
            raise InvalidInputError(f"row {i}: all price relatives are zero")
        rows.append(vals)
    X = np.array(rows, dtype=float).reshape(len(rows), n_stock)
    if si_idx is None:
        return SampleSet(X)
    return SampleSet(X, np.array(labels, dtype=np.int64))


def _check_probs(p, name="win_probs"):
    p = np.asarray(p, dtype=float).ravel()
    if np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} is not on the probability simplex: {p.tolist()}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def gen_horse_race(M, win_probs, payoffs, N, seed):
    """Simulate N races among M horses; the winner pays ``payoffs[m]``."""
    p = _check_probs(win_probs)
    o = check_positive(np.asarray(payoffs, dtype=float).ravel(), "payoffs")
    if M < 1 or p.shape[0] != M or o.shape[0] != M:
        raise InvalidInputError(f"need M >= 1 and {M} win probabilities and payoffs")
    rng = np.random.default_rng(seed)
    winners = rng.choice(M, size=N, p=p)
    X = np.zeros((N, M))
    X[np.arange(N), winners] = o[winners]
    return SampleSet(X)


def gen_rayleigh_simo(M, mean_gains, N, seed):
    """N draws of M independent exponential power gains."""
    mu = check_positive(np.asarray(mean_gains, dtype=float).ravel(), "mean gains")
    if mu.shape[0] != M:
        raise InvalidInputError(f"expected {M} mean gains, got {mu.shape[0]}")
    rng = np.random.default_rng(seed)
    return SampleSet(rng.exponential(scale=mu, size=(N, M)))


def gen_independent_si(N, si_probs, seed):
    """SI labels drawn i.i.d. from ``si_probs``, independent of everything."""
    q = _check_probs(si_probs, "si_probs")
    rng = np.random.default_rng(seed)
    return rng.choice(q.shape[0], size=N, p=q) + 1


def winner_si(samples):
    """Label each period by the index (1-based) of its best asset."""
    return np.argmax(samples.samples, axis=1) + 1


def empirical_market(s):
    """Empirical joint distribution of (sample, SI label) pairs."""
    if s.N == 0:
        raise InvalidInputError("cannot build a market from an empty SampleSet")
    X = s.samples
    key = X if s.si_labels is None else np.column_stack([X, s.si_labels.astype(float)])
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    probs = counts / s.N
    if s.si_labels is None:
        return DiscreteMarket(uniq, probs, None, counts)
    return DiscreteMarket(uniq[:, :-1], probs, uniq[:, -1].astype(np.int64), counts)


def quantile_bins(values, K):
    """Upper edges of the K-1 lower equal-population bins."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    N = v.shape[0]
    idx = np.ceil(np.arange(1, K) * N / K).astype(int) - 1
    return v[idx]


def discretize_si(values, K):
    """Quantize a continuous SI sequence into labels 1..K by quantiles.

    Values equal to a bin edge go to the lower bin.
    """
    v = np.asarray(values, dtype=float).ravel()
    if K < 2:
        raise InvalidInputError("K must be at least 2")
    if v.size == 0:
        raise InvalidInputError("cannot discretize an empty sequence")
    if K > v.size:
        raise InvalidInputError(f"K={K} exceeds the sequence length {v.size}")
    edges = quantile_bins(v, K)
    labels = 1 + np.searchsorted(edges, v, side="left")
    if np.unique(labels).size < K:
        warnings.warn("discretize_si: ties left some bins empty", RuntimeWarning, stacklevel=2)
    return labels.astype(np.int64)
