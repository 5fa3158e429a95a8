"""Concave maximization over the probability simplex.

An active-set Newton method: the iterate moves on the face spanned by its
support, blocking coordinates are dropped exactly at zero, and a zero
coordinate whose normalized marginal utility exceeds one is re-admitted once
the current face is stationary. Every accepted step increases the objective.
"""

from __future__ import annotations

import numpy as np

ACTIVE_THRESHOLD = 1e-8


def project_simplex(v):
    """Euclidean projection onto {b >= 0, sum b = 1}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def normalized_residuals(b, g):
    """Marginal utilities divided by the multiplier estimate b.g."""
    return g / float(b @ g)


def kkt_gap(b, r, threshold=ACTIVE_THRESHOLD):
    active = b > threshold
    gap = 0.0
    if active.any():
        gap = float(np.max(np.abs(r[active] - 1.0)))
    if (~active).any():
        gap = max(gap, float(np.max(np.clip(r[~active] - 1.0, 0.0, None))))
    return gap


def _newton_direction(g, H):
    """Maximizer of the quadratic model on {sum d = 0}, lightly regularized."""
    n = g.size
    A = -H
    scale = max(float(np.max(np.abs(np.diag(A)))), 1e-300)
    A = A + 1e-12 * scale * np.eye(n)
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = A
    K[:n, n] = 1.0
    K[n, :n] = 1.0
    rhs = np.concatenate([g, [0.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    d = sol[:n]
    return d - d.mean()


class SimplexResult:
    __slots__ = ("b", "iterations", "converged", "gap", "history", "stalled")

    def __init__(self, b, iterations, converged, gap, history, stalled=False):
        self.b = b
        self.iterations = iterations
        self.converged = converged
        self.gap = gap
        self.history = history
        self.stalled = stalled


def newton_step(obj, b, f, tol):
    """One monotone active-set Newton step; returns (b, f) or None if stuck."""
    g_full = obj.grad(b)
    r = normalized_residuals(b, g_full)
    F = np.flatnonzero(b > 0)
    face_stationary = F.size == 1 or float(np.max(np.abs(r[F] - 1.0))) <= tol
    if face_stationary:
        out = np.flatnonzero((b == 0) & (r > 1.0 + tol))
        if out.size == 0:
            return None
        F = np.sort(np.append(F, out[np.argmax(r[out])]))
    H = obj.hess(b)[np.ix_(F, F)]
    g = g_full[F]
    d = _newton_direction(g, H)
    # zero coordinates that the model wants to push negative stay out of the face
    while True:
        stuck = (b[F] == 0) & (d < 0)
        if not stuck.any():
            break
        F = F[~stuck]
        if F.size <= 1:
            return None
        d = _newton_direction(g_full[F], obj.hess(b)[np.ix_(F, F)])
        g = g_full[F]
    slope = float(g @ d)
    if not slope > 0:
        return None
    neg = d < 0
    alpha_max = float(np.min(b[F][neg] / -d[neg])) if neg.any() else np.inf
    alpha = min(1.0, alpha_max)
    noise = 1e-15 * max(1.0, abs(f))
    for _ in range(80):
        trial = b.copy()
        trial[F] = b[F] + alpha * d
        if alpha == alpha_max:
            block = F[neg][np.argmin(b[F][neg] / -d[neg])]
            trial[block] = 0.0
        trial = np.clip(trial, 0.0, None)
        trial /= trial.sum()
        f_new = obj.value(trial)
        if f_new >= f + 1e-4 * alpha * slope or (alpha * slope <= noise and f_new >= f - noise):
            return trial, f_new
        alpha *= 0.5
    return None


def maximize(obj, b0, *, tol, max_iter, warm_step=None, warm_iters=0, polish=True):
    """Maximize ``obj`` over the simplex starting from ``b0``.

    ``warm_step(b, f) -> (b, f)`` is a first-order monotone update run for the
    first ``warm_iters`` iterations (all iterations when ``polish`` is off).
    """
    b = np.array(b0, dtype=float)
    f = obj.value(b)
    history = [f]
    it = 0
    stalled = False
    gap = kkt_gap(b, normalized_residuals(b, obj.grad(b)))
    while gap > tol and it < max_iter:
        use_newton = polish and it >= warm_iters
        step = None
        if use_newton:
            step = newton_step(obj, b, f, tol)
            if step is None and warm_step is not None and np.all(b > 0):
                step = warm_step(b, f)
        elif warm_step is not None:
            step = warm_step(b, f)
        if step is None:
            stalled = True
            break
        b, f = step
        history.append(f)
        it += 1
        gap = kkt_gap(b, normalized_residuals(b, obj.grad(b)))
    return SimplexResult(b, it, gap <= tol, gap, history, stalled)
