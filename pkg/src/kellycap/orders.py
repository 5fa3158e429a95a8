"""Integral stochastic orders between scalar laws and between stock vectors.

Every check is grid-relative: "for all rho >= 0" is a log-spaced rho grid plus
the rho -> 0 and rho -> infinity limits, and "for all b" is a simplex lattice
(or a low-discrepancy cloud in high dimension). The verdict records the grids
it used and the most violated inequality.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from ._validation import InvalidInputError, dec, dec_list
from .channel import solve_power_allocation
from .growth import solve_log_optimal

__all__ = [
    "OrderCriterion",
    "OrderVerdict",
    "OrderSolverError",
    "default_rho_grid",
    "simplex_grid",
    "lt_order",
    "capacity_order",
    "vector_order_fixed_b",
    "vector_order_optimized",
]

KINDS = ("growth", "capacity", "laplace", "generic")
ORDER_TOL = 1e-10
RHO_ZERO = "0+"
RHO_INF = "inf"


class OrderSolverError(RuntimeError):
    def __init__(self, msg, rho):
        super().__init__(msg)
        self.rho = rho


@dataclass(frozen=True)
class OrderCriterion:
    """Which generator family defines the order.

    ``family`` is only used by the ``generic`` kind: a sequence of
    ``(label, u)`` pairs where ``u`` acts elementwise on arrays.
    """

    kind: str
    family: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown order kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "generic" and not self.family:
            raise InvalidInputError("generic order needs a nonempty function family")


def _crit(c):
    return c if isinstance(c, OrderCriterion) else OrderCriterion(c)


@dataclass
class OrderVerdict:
    holds: bool
    worst_margin: float
    witness: dict
    grid_spec: dict
    kind: str
    tolerance: float = ORDER_TOL
    skipped: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def to_dict(self):
        def enc(v):
            if isinstance(v, (list, tuple, np.ndarray)):
                return [enc(x) for x in v]
            if isinstance(v, (float, np.floating)):
                return dec(v)
            if isinstance(v, np.integer):
                return int(v)
            return v

        return {
            "kind": self.kind,
            "holds": self.holds,
            "worst_margin": dec(self.worst_margin),
            "tolerance": dec(self.tolerance),
            "witness": {k: enc(v) for k, v in self.witness.items()},
            "grid_spec": {k: enc(v) for k, v in self.grid_spec.items()},
            "skipped": [{k: enc(v) for k, v in s.items()} for s in self.skipped],
            "rows": [{k: enc(v) for k, v in r.items()} for r in self.rows],
        }


def default_rho_grid():
    return np.logspace(-3, 3, 61)


def _lattice(dim, mesh):
    pts = []
    for bars in itertools.combinations(range(mesh + dim - 1), dim - 1):
        edges = (-1,) + bars + (mesh + dim - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(dim)])
    return np.array(pts, dtype=float) / mesh


def _halton_simplex(dim, n):
    if dim == 1:
        return np.ones((1, 1))
    h = qmc.Halton(d=dim - 1, scramble=False)
    h.fast_forward(1)
    u = np.sort(h.random(n), axis=1)
    edges = np.column_stack([np.zeros(n), u, np.ones(n)])
    return np.diff(edges, axis=1)


def simplex_grid(dim, mesh=20, n_lowdisc=512):
    """Portfolio grid and its description.

    A lattice of spacing 1/mesh for up to five assets, otherwise
    ``n_lowdisc`` Halton points mapped into the simplex; vertices and the
    barycenter are always included.
    """
    if dim <= 5:
        pts = _lattice(dim, mesh)
        spec = {"type": "lattice", "dim": dim, "mesh": mesh}
    else:
        pts = _halton_simplex(dim, n_lowdisc)
        spec = {"type": "halton", "dim": dim, "points": n_lowdisc}
    extra = np.vstack([np.eye(dim), np.full((1, dim), 1.0 / dim)])
    pts = np.vstack([pts, extra])
    _, first = np.unique(pts, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    spec["n_points"] = int(pts.shape[0])
    spec["includes"] = "vertices+barycenter"
    return pts, spec


def _rho_spec(rho_grid):
    r = np.asarray(rho_grid, dtype=float)
    return {"rho": r.tolist(), "limits": [RHO_ZERO, RHO_INF]}


def _check_pair(X, Y):
    if X.dim != Y.dim:
        raise InvalidInputError(f"markets have different dimensions {X.dim} and {Y.dim}")


def _sides(kind, ZX, pX, ZY, pY, rho):
    """(lhs, rhs) of the defining inequality lhs <= rhs, per portfolio row."""
    if kind == "laplace":
        return np.exp(-rho * ZY) @ pY, np.exp(-rho * ZX) @ pX
    if kind == "capacity":
        return np.log1p(rho * ZX) @ pX, np.log1p(rho * ZY) @ pY
    raise AssertionError(kind)


def _safe_log_mean(Z, p):
    with np.errstate(divide="ignore"):
        L = np.log(Z)
    return np.where(np.any(Z <= 0, axis=1), -np.inf, np.where(np.isfinite(L), L, 0.0) @ p)


def _positive_log_mean(Z, p):
    with np.errstate(divide="ignore"):
        L = np.where(Z > 0, np.log(np.where(Z > 0, Z, 1.0)), 0.0)
    return L @ p


def _limits(kind, ZX, pX, ZY, pY, tol):
    """Margins of the rho -> 0 and rho -> inf limits, per portfolio row."""
    zero = ZY @ pY - ZX @ pX
    p0X = (ZX <= 0) @ pX
    p0Y = (ZY <= 0) @ pY
    if kind == "laplace":
        inf = p0X - p0Y
    else:
        lead = p0X - p0Y
        inf = np.where(np.abs(lead) > tol, lead, _positive_log_mean(ZY, pY) - _positive_log_mean(ZX, pX))
    return zero, inf


def _fixed_b_scan(X, Y, kind, B, rho_grid, tol, family=()):
    """Margins for every (rho-or-limit, b); returns list of (rho_label, lhs, rhs) arrays."""
    ZX = X.values @ B.T  # atoms x portfolios
    ZY = Y.values @ B.T
    ZX, ZY = ZX.T, ZY.T
    pX, pY = X.probs, Y.probs
    out = []
    if kind == "growth":
        out.append(("none", _safe_log_mean(ZX, pX), _safe_log_mean(ZY, pY)))
        return out
    if kind == "generic":
        for label, u in family:
            out.append((label, u(ZX) @ pX, u(ZY) @ pY))
        return out
    for rho in rho_grid:
        lhs, rhs = _sides(kind, ZX, pX, ZY, pY, float(rho))
        out.append((float(rho), lhs, rhs))
    zero, inf = _limits(kind, ZX, pX, ZY, pY, tol)
    out.append((RHO_ZERO, np.zeros_like(zero), zero))
    out.append((RHO_INF, np.zeros_like(inf), inf))
    return out


def _verdict_from_scan(scan, B, kind, grid_spec, tol, rho_key="rho", extra_witness=None):
    worst = math.inf
    witness = {}
    skipped = []
    rows = []
    for label, lhs, rhs in scan:
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        both = np.isneginf(lhs) & np.isneginf(rhs)
        lhs_only = np.isneginf(lhs) & ~np.isneginf(rhs)
        for j in np.flatnonzero(both | lhs_only):
            skipped.append({rho_key: label, "b": B[j].tolist(),
                            "reason": "both sides -inf" if both[j] else "lhs -inf"})
        valid = ~(both | lhs_only)
        with np.errstate(invalid="ignore"):
            margin = np.where(valid, rhs - lhs, np.inf)
        j = int(np.argmin(margin))
        if valid.any():
            rows.append({rho_key: label, "b": B[j].tolist(), "lhs": float(lhs[j]),
                         "rhs": float(rhs[j]), "margin": float(margin[j])})
        if margin[j] < worst:
            worst = float(margin[j])
            witness = {rho_key: label, "b": B[j].tolist()}
            if extra_witness:
                witness.update(extra_witness)
    if worst == math.inf:
        worst = 0.0
    return OrderVerdict(worst >= -tol, worst, witness, grid_spec, kind, tol, skipped, rows)


def _check_scalar(Z, name):
    if Z.dim != 1:
        raise InvalidInputError(f"{name} must be a scalar distribution")


def lt_order(X, Y, rho_grid=None, tol=ORDER_TOL):
    """X <=_LT Y  iff  E[exp(-rho Y)] <= E[exp(-rho X)] for all rho >= 0."""
    _check_scalar(X, "X")
    _check_scalar(Y, "Y")
    return vector_order_fixed_b(X, Y, "laplace", b_grid=np.ones((1, 1)), rho_grid=rho_grid, tol=tol)


def capacity_order(X, Y, rho_grid=None, tol=ORDER_TOL):
    """X <=_c Y  iff  E[log(1 + rho X)] <= E[log(1 + rho Y)] for all rho >= 0."""
    _check_scalar(X, "X")
    _check_scalar(Y, "Y")
    return vector_order_fixed_b(X, Y, "capacity", b_grid=np.ones((1, 1)), rho_grid=rho_grid, tol=tol)


def vector_order_fixed_b(X, Y, crit, b_grid=None, rho_grid=None, *, b_mesh=20,
                         permutation_invariant=False, tol=ORDER_TOL):
    """Check b.X <= b.Y under ``crit`` for every grid portfolio b.

    With ``permutation_invariant`` the check must hold for every
    rearrangement of X's assets (up to six assets).
    """
    crit = _crit(crit)
    _check_pair(X, Y)
    rho_grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if np.any(rho_grid < 0):
        raise InvalidInputError("rho grid must be nonnegative")
    if b_grid is None:
        B, bspec = simplex_grid(X.dim, b_mesh)
    else:
        B = np.atleast_2d(np.asarray(b_grid, dtype=float))
        bspec = {"type": "explicit", "dim": X.dim, "n_points": int(B.shape[0])}
    grid_spec = {"b_grid": bspec}
    if crit.kind in ("capacity", "laplace"):
        grid_spec["rho_grid"] = _rho_spec(rho_grid)
    if crit.kind == "generic":
        grid_spec["family"] = [label for label, _ in crit.family]
    if not permutation_invariant:
        scan = _fixed_b_scan(X, Y, crit.kind, B, rho_grid, tol, crit.family)
        return _verdict_from_scan(scan, B, crit.kind, grid_spec, tol)
    if X.dim > 6:
        raise InvalidInputError("permutation-invariant check is limited to six assets")
    grid_spec["permutations"] = math.factorial(X.dim)
    best = None
    for perm in itertools.permutations(range(X.dim)):
        scan = _fixed_b_scan(X.permuted(perm), Y, crit.kind, B, rho_grid, tol, crit.family)
        v = _verdict_from_scan(scan, B, crit.kind, grid_spec, tol, extra_witness={"perm": list(perm)})
        if best is None or v.worst_margin < best.worst_margin:
            skipped = (best.skipped if best else []) + v.skipped
            best = v
            best.skipped = skipped
    return best


def _zero_mass(Z):
    return (Z.values <= 0).T @ Z.probs


def vector_order_optimized(X, Y, crit, rho_grid=None, *, tol=ORDER_TOL, solver_tol=1e-12,
                           max_iter=100_000):
    """Compare optimized values: max_b on each side separately."""
    crit = _crit(crit)
    _check_pair(X, Y)
    rho_grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    grid_spec = {"b_grid": {"type": "optimized", "dim": X.dim}}
    scan = []  # (label, lhs, rhs, witness)
    if crit.kind == "growth":
        rx = solve_log_optimal(X, tol=solver_tol, max_iter=max_iter)
        ry = solve_log_optimal(Y, tol=solver_tol, max_iter=max_iter)
        scan.append(("none", rx.growth_rate, ry.growth_rate,
                     {"b_x": rx.weights.tolist(), "b_y": ry.weights.tolist()}))
    elif crit.kind == "capacity":
        grid_spec["rho_grid"] = _rho_spec(rho_grid)
        for rho in rho_grid:
            rho = float(rho)
            if rho == 0:
                scan.append((rho, 0.0, 0.0, {}))
                continue
            try:
                ax = solve_power_allocation(X, rho, tol=solver_tol, max_iter=max_iter)
                ay = solve_power_allocation(Y, rho, tol=solver_tol, max_iter=max_iter)
            except Exception as exc:
                raise OrderSolverError(f"inner solve failed at rho={rho}: {exc}", rho) from exc
            scan.append((rho, ax.capacity, ay.capacity,
                         {"b_x": ax.allocation.fractions.tolist(),
                          "b_y": ay.allocation.fractions.tolist()}))
        scan.append((RHO_ZERO, float(np.max(X.mean())), float(np.max(Y.mean())), {}))
        try:
            gx = solve_log_optimal(X, tol=solver_tol, max_iter=max_iter).growth_rate
            gy = solve_log_optimal(Y, tol=solver_tol, max_iter=max_iter).growth_rate
            scan.append((RHO_INF, gx, gy, {}))
        except ValueError:
            pass
    elif crit.kind == "laplace":
        grid_spec["rho_grid"] = _rho_spec(rho_grid)
        # a convex function of b peaks at a vertex of the simplex
        for rho in rho_grid:
            rho = float(rho)
            ltx = np.exp(-rho * X.values).T @ X.probs
            lty = np.exp(-rho * Y.values).T @ Y.probs
            scan.append((rho, float(lty.max()), float(ltx.max()),
                         {"b_x": int(np.argmax(ltx)), "b_y": int(np.argmax(lty))}))
        scan.append((RHO_ZERO, float(np.min(X.mean())), float(np.min(Y.mean())), {}))
        scan.append((RHO_INF, float(np.max(_zero_mass(Y))), float(np.max(_zero_mass(X))), {}))
    else:
        raise InvalidInputError("generic kind has no optimized variant")
    worst = math.inf
    witness = {}
    rows = []
    for label, lhs, rhs, wit in scan:
        margin = rhs - lhs
        rows.append({"rho": label, "lhs": lhs, "rhs": rhs, "margin": margin})
        if margin < worst:
            worst = margin
            witness = {"rho": label, **wit}
    return OrderVerdict(worst >= -tol, float(worst), witness, grid_spec, crit.kind, tol, [], rows)
