"""Brute-force reference solvers for tiny instances.

These deliberately share no numerical code with the production solvers:
the SVR oracle enumerates the faces of the primal objective and the
Ward oracle recomputes error sums of squares from raw points each step.
They are exponential or cubic and meant for cross-checking only.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConfigError, InstanceTooLarge

SVR_MAX_N, SVR_MAX_M = 6, 3
HAC_MAX_N = 8


def _profiled_loss(R: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """min over b of sum_i max(0, |R_i - b| - eps) for each row of R, and the minimizing b.

    The loss is convex piecewise linear in b, so its minimum sits on one of
    the breakpoints R_i +- eps.
    """
    bps = np.concatenate([R - eps, R + eps], axis=1)  # (P, 2N)
    loss = np.maximum(np.abs(R[:, None, :] - bps[:, :, None]) - eps, 0.0).sum(axis=2)
    k = loss.argmin(axis=1)
    rows = np.arange(len(R))
    return loss[rows, k], bps[rows, k]


def _svr_objective(W: np.ndarray, X, y, C, eps):
    R = y[None, :] - W @ X.T
    loss, b = _profiled_loss(R, eps)
    return 0.5 * (W * W).sum(axis=1) + C * loss, b


def _face_candidates(X, y, C, eps) -> np.ndarray:
    """Minimizers of the smooth quadratic on every face of the loss arrangement.

    A face fixes, for each sample, whether its residual sits exactly on the
    upper or lower tube edge or strictly below / inside / above the tube.
    On a face the objective is 1/2||w||^2 plus a linear term, minimized
    under the edge equalities by one KKT solve; the face holding the
    optimum returns the optimal w exactly.
    """
    n, m = X.shape
    out = [np.zeros((1, m))]
    for e in range(min(n, m + 1) + 1):
        for E in itertools.combinations(range(n), e):
            E = list(E)
            rest = [i for i in range(n) if i not in E]
            XE = X[E]
            A = np.zeros((m + 1 + e, m + 1 + e))
            A[:m, :m] = np.eye(m)
            A[:m, m + 1 :] = XE.T
            A[m, m + 1 :] = 1.0
            A[m + 1 :, :m] = XE
            A[m + 1 :, m] = 1.0
            if rest:
                S = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=len(rest))))
                g = S @ X[rest]
            else:
                S = np.zeros((1, 0))
                g = np.zeros((1, m))
            for sig in itertools.product((-1.0, 1.0), repeat=e):
                rhs = np.empty((m + 1 + e, len(S)))
                rhs[:m] = C * g.T
                rhs[m] = C * S.sum(axis=1)
                rhs[m + 1 :] = (y[E] - np.array(sig) * eps)[:, None]
                out.append(np.linalg.lstsq(A, rhs, rcond=None)[0][:m].T)
    return np.vstack(out)


def _grid_refine(X, y, C, eps, f0, resolution, points):
    m = X.shape[1]
    half = np.sqrt(2.0 * f0) * 1.01  # 1/2||w||^2 <= f(w) <= f(0)
    grid = np.array(list(itertools.product(np.linspace(-1.0, 1.0, points), repeat=m)))
    center = np.zeros(m)
    best_w, best_f = center, f0
    while True:
        step = 2.0 * half / (points - 1)
        W = center + half * grid
        f, _ = _svr_objective(W, X, y, C, eps)
        k = int(f.argmin())
        if f[k] < best_f:
            best_w, best_f = W[k].copy(), float(f[k])
        center = W[k]
        if step <= resolution:
            return best_w[None, :]
        half = 3.0 * step


def oracle_svr_qp(X, y, C: float, epsilon: float, method: str = "enumerate",
                  resolution: float = 1e-6, points: int = 25) -> tuple[np.ndarray, float, float]:
    """Minimize 1/2||w||^2 + C sum max(0, |y - Xw - b| - eps) on a tiny instance.

    The bias is always profiled out exactly (the loss is piecewise linear in
    b, so its minimum is at a breakpoint).  ``method='enumerate'`` visits
    every face of the piecewise-quadratic objective and is exact;
    ``method='grid'`` is a shrinking grid search to ``resolution``, kept for
    comparison (it can stall in narrow valleys along loss kinks).
    Returns (w, b, objective).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n, m = X.shape
    if method not in ("enumerate", "grid"):
        raise ConfigError(f"unknown oracle method {method!r}")
    if n > SVR_MAX_N or m > SVR_MAX_M:
        raise InstanceTooLarge(f"oracle handles at most {SVR_MAX_N}x{SVR_MAX_M}, got {n}x{m}")
    if len(y) != n:
        raise ConfigError("X and y disagree on the number of samples")
    f0, _ = _svr_objective(np.zeros((1, m)), X, y, C, epsilon)
    if f0[0] == 0.0:
        W = np.zeros((1, m))
    elif method == "enumerate":
        W = _face_candidates(X, y, C, epsilon)
    else:
        W = _grid_refine(X, y, C, epsilon, float(f0[0]), resolution, points)
    f, b = _svr_objective(W, X, y, C, epsilon)
    k = int(f.argmin())
    return W[k].copy(), float(b[k]), float(f[k])


def _ess(X: np.ndarray, members) -> float:
    pts = X[list(members)]
    return float(((pts - pts.mean(axis=0)) ** 2).sum())


def oracle_hac_inertia(X, adjacency=None, R: int = 1) -> tuple[list[tuple[int, int, float]], list[int]]:
    """Greedy Ward by direct error-sum-of-squares increase, restricted to adjacent clusters.

    ``adjacency`` is an N x N boolean array (None means complete).  Clusters
    are adjacent if any pair of their members is.  Ties go to the smallest
    (min node id, max node id).  Returns the merges as (left, right, cost)
    with cost = ESS increase, and cluster labels for the first N - R merges
    numbered by smallest member.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > HAC_MAX_N:
        raise InstanceTooLarge(f"oracle handles at most {HAC_MAX_N} samples, got {n}")
    if not 1 <= R <= n:
        raise ConfigError(f"R must be in [1, {n}]")
    adj = np.ones((n, n), bool) if adjacency is None else np.asarray(adjacency, bool)
    adj = adj | adj.T
    clusters = {i: frozenset([i]) for i in range(n)}
    merges = []
    labels = list(range(n))
    for m in range(n - 1):
        if m == n - R:
            labels = _label_by_smallest(clusters, n)
        cands = []
        for a, b in itertools.combinations(sorted(clusters), 2):
            A, B = clusters[a], clusters[b]
            if any(adj[i, j] for i in A for j in B):
                cost = _ess(X, A | B) - _ess(X, A) - _ess(X, B)
                cands.append((cost, a, b))
        if not cands:
            for a, b in itertools.combinations(sorted(clusters), 2):
                A, B = clusters[a], clusters[b]
                cands.append((_ess(X, A | B) - _ess(X, A) - _ess(X, B), a, b))
        cost, a, b = min(cands)
        merges.append((a, b, cost))
        clusters[n + m] = clusters.pop(a) | clusters.pop(b)
    if R == 1:
        labels = [0] * n
    return merges, labels


def _label_by_smallest(clusters, n) -> list[int]:
    groups = sorted(clusters.values(), key=min)
    out = [0] * n
    for lab, g in enumerate(groups):
        for i in g:
            out[i] = lab
    return out
