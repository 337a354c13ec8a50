"""Linear epsilon-SVR with an unregularized bias.

Primal problem::

    min  1/2 ||w||^2 + C * sum_i xi_i
    s.t. |y_i - w.x_i - b| <= eps + xi_i,  xi_i >= 0

The dual has 2N box-constrained variables (alpha, alpha*) in [0, C] and one
equality constraint sum(alpha - alpha*) = 0 coming from the free bias.

Two deterministic solvers share that dual:

* ``smo``: sequential minimal optimisation, pairs chosen by maximal KKT
  violation with second-order gain.  Exact but has a long tail when most
  points sit at the bound C (typical for standardized activations with
  N > M).
* ``ipm`` (default): a Mehrotra primal-dual interior-point solve, then the
  iterate is snapped to the box and handed to SMO as a warm start, which
  finishes in a few pair updates.

Only the N x N Gram matrix is formed, so wide layers stay cheap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ConfigError, DegenerateInput, NotConvergedWarning

_TAU = 1e-12


@dataclass(frozen=True)
class SvrConfig:
    C: float = 1.0
    epsilon: float = 0.1
    tol: float = 1e-4
    max_iter: int = 100_000
    standardize: bool = True
    kernel: str = "linear"
    method: str = "ipm"

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if not self.epsilon >= 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.method not in ("ipm", "smo"):
            raise ConfigError(f"method must be 'ipm' or 'smo', got {self.method!r}")
        if self.kernel != "linear":
            raise ConfigError(f"only the linear kernel is implemented, got {self.kernel!r}")


@dataclass(frozen=True)
class SvrModel:
    weights: np.ndarray
    bias: float
    dual_coefs: np.ndarray  # alpha - alpha*, one per training sample
    objective: float  # primal objective at (weights, bias), in the fitted feature space
    iterations: int
    converged: bool
    kkt_violation: float
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.center is None:
            return X
        return (X - self.center) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return self.transform(X) @ self.weights + self.bias


def standardize_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center/scale columns; zero-variance columns become all zeros."""
    center = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    Z = (X - center) / scale
    Z[:, sd == 0] = 0.0
    return Z, center, scale


def primal_objective(X, y, w, b, C, epsilon) -> float:
    r = np.asarray(y) - np.asarray(X) @ w - b
    return float(0.5 * w @ w + C * np.maximum(np.abs(r) - epsilon, 0.0).sum())


def _best_bias(r0: np.ndarray, C: float, eps: float, b_dual: float) -> float:
    """Exact minimiser over b of C*sum(max(|r0 - b| - eps, 0)); keeps b_dual unless strictly worse."""

    def loss(b):
        return np.maximum(np.abs(r0 - b) - eps, 0.0).sum()

    cands = np.concatenate([r0 - eps, r0 + eps])
    losses = np.maximum(np.abs(r0[None, :] - cands[:, None]) - eps, 0.0).sum(axis=1)
    k = int(np.argmin(losses))
    if losses[k] < loss(b_dual) - 1e-15 * max(1.0, losses[k]):
        return float(cands[k])
    return b_dual


def kkt_violation(model: SvrModel, X, y, C: float, epsilon: float) -> float:
    """Largest breach (in residual units) of the epsilon-tube KKT conditions.

    coef == 0       -> |r| <= eps
    0 < |coef| < C  -> |r| == eps, with the sign of coef
    |coef| == C     -> |r| >= eps, with the sign of coef
    """
    r = np.asarray(y, dtype=np.float64) - model.decision_function(X)
    a = model.dual_coefs
    bound = C * (1 - 1e-12)
    viol = np.zeros_like(r)
    zero = np.abs(a) <= C * 1e-12
    viol[zero] = np.maximum(np.abs(r[zero]) - epsilon, 0.0)
    nz = ~zero
    sr = np.sign(a[nz]) * r[nz]  # residual measured in the coefficient's direction
    at_bound = np.abs(a[nz]) >= bound
    viol[nz] = np.where(at_bound, np.maximum(epsilon - sr, 0.0), np.abs(sr - epsilon))
    return float(viol.max()) if len(viol) else 0.0


@njit(cache=True, nogil=True)
def _smo_loop(K, y, C, eps, tol, max_iter, beta):
    """Pair updates until the maximal KKT violation drops below ``tol``.

    ``beta`` holds (alpha, alpha*) and is updated in place; it must satisfy
    the box and the equality constraint on entry.
    """
    n = y.shape[0]
    m = 2 * n
    G = np.empty(m)
    for t in range(m):
        st = t % n
        acc = 0.0
        for u in range(m):
            if beta[u] != 0.0:
                zu = 1.0 if u < n else -1.0
                acc += zu * beta[u] * K[u % n, st]
        zt = 1.0 if t < n else -1.0
        G[t] = zt * acc + (eps - y[st] if t < n else eps + y[st])
    it = 0
    converged = False
    while it < max_iter:
        # i: most violating index in the "up" set
        g_max = -np.inf
        i = -1
        for t in range(m):
            if t < n:
                if beta[t] < C and -G[t] > g_max:
                    g_max = -G[t]
                    i = t
            elif beta[t] > 0 and G[t] > g_max:
                g_max = G[t]
                i = t
        si = i % n if i >= 0 else 0
        g_min = np.inf
        j = -1
        best = np.inf
        for t in range(m):
            st = t % n
            if t < n:
                if beta[t] <= 0:
                    continue
                v = -G[t]
            else:
                if beta[t] >= C:
                    continue
                v = G[t]
            if v < g_min:
                g_min = v
            if i < 0:
                continue
            diff = g_max - v
            if diff > 0:
                q = K[si, si] + K[st, st] - 2.0 * K[si, st]
                if q <= 0:
                    q = _TAU
                gain = -(diff * diff) / q
                if gain < best:
                    best = gain
                    j = t
        if i < 0 or j < 0 or g_max - g_min < tol:
            converged = True
            break
        sj = j % n
        zi = 1.0 if i < n else -1.0
        zj = 1.0 if j < n else -1.0
        Qij = zi * zj * K[si, sj]
        bi = beta[i]
        bj = beta[j]
        if zi != zj:
            q = K[si, si] + K[sj, sj] + 2.0 * Qij
            if q <= 0:
                q = _TAU
            delta = (-G[i] - G[j]) / q
            d = bi - bj
            ni = bi + delta
            nj = bj + delta
            if d > 0:
                if nj < 0:
                    nj = 0.0
                    ni = d
            elif ni < 0:
                ni = 0.0
                nj = -d
            if d > 0:
                if ni > C:
                    ni = C
                    nj = C - d
            elif nj > C:
                nj = C
                ni = C + d
        else:
            q = K[si, si] + K[sj, sj] - 2.0 * Qij
            if q <= 0:
                q = _TAU
            delta = (G[i] - G[j]) / q
            s = bi + bj
            ni = bi - delta
            nj = bj + delta
            if s > C:
                if ni > C:
                    ni = C
                    nj = s - C
            elif nj < 0:
                nj = 0.0
                ni = s
            if s > C:
                if nj > C:
                    nj = C
                    ni = s - C
            elif ni < 0:
                ni = 0.0
                nj = s
        di = ni - bi
        dj = nj - bj
        beta[i] = ni
        beta[j] = nj
        for t in range(m):
            st = t % n
            zt = 1.0 if t < n else -1.0
            G[t] += zt * (zi * di * K[si, st] + zj * dj * K[sj, st])
        it += 1
    return G, it, converged


def _interior_point(Z: np.ndarray, y: np.ndarray, C: float, eps: float, max_iter: int = 200) -> np.ndarray:
    """Approximate dual solution (alpha, alpha*) by a primal-dual interior-point method.

    Solves  min 1/2 x'Px + q'x  s.t.  a'x = 0,  0 <= x <= C  with
    P = [[K, -K], [-K, K]], K = Z Z', q = [eps - y, eps + y], a = [1, -1].
    The 2N Newton system collapses to (K + diag(e)) d = r in the difference
    d = alpha - alpha*, solved through Z (Woodbury) when Z has fewer columns
    than rows.
    """
    n, mcols = Z.shape
    K = Z @ Z.T if mcols >= n else None
    q1, q2 = eps - y, eps + y
    m = 2 * n
    x1 = np.full(n, C / 2)
    x2 = np.full(n, C / 2)
    z1l, z2l, z1u, z2u = (np.ones(n) for _ in range(4))
    nu = 0.0
    kdiag = np.einsum("ij,ij->i", Z, Z)
    scale = max(1.0, np.abs(y).max() + eps, kdiag.max() * C)

    def kmul(v):
        return K @ v if K is not None else Z @ (Z.T @ v)

    best = None

    for _ in range(max_iter):
        s1, s2 = C - x1, C - x2
        kd = kmul(x1 - x2)
        rd1 = kd + q1 + nu - z1l + z1u
        rd2 = -kd + q2 - nu - z2l + z2u
        rp = x1.sum() - x2.sum()
        mu = (x1 @ z1l + x2 @ z2l + s1 @ z1u + s2 @ z2u) / (2 * m)
        res = max(np.abs(rd1).max(), np.abs(rd2).max())
        if not np.isfinite(mu) or (best is not None and res > 1e3 * max(best[0], 1e-12 * scale)):
            break  # numerical breakdown: keep the last good iterate
        best = (res, np.concatenate([x1, x2]))
        if mu < 1e-10 * scale and res < 1e-8 * scale:
            break
        D1 = z1l / x1 + z1u / s1
        D2 = z2l / x2 + z2u / s2
        e = D1 * D2 / (D1 + D2)
        if K is not None:
            L = np.linalg.cholesky(K + np.diag(e))

            def ksolve(r):
                return np.linalg.solve(L.T, np.linalg.solve(L, r))

        else:
            einv = 1.0 / e
            Lw = np.linalg.cholesky(np.eye(mcols) + (Z.T * einv) @ Z)

            def ksolve(r):
                t = Z.T @ (einv * r)
                t = np.linalg.solve(Lw.T, np.linalg.solve(Lw, t))
                return einv * r - einv * (Z @ t)

        def hsolve(r1, r2):
            # [[K + D1, -K], [-K, K + D2]] [u; v] = [r1; r2]
            sm = r1 + r2
            dlt = ksolve(r1 - D1 * sm / (D1 + D2))
            u = (D2 * dlt + sm) / (D1 + D2)
            return u, u - dlt

        v1, v2 = hsolve(np.ones(n), -np.ones(n))
        av = v1.sum() - v2.sum()

        def direction(rl1, rl2, ru1, ru2):
            u1, u2 = hsolve(-rd1 - rl1 / x1 + ru1 / s1, -rd2 - rl2 / x2 + ru2 / s2)
            dnu = (u1.sum() - u2.sum() + rp) / av
            dx1, dx2 = u1 - v1 * dnu, u2 - v2 * dnu
            return (
                dx1, dx2, dnu,
                (-rl1 - z1l * dx1) / x1, (-rl2 - z2l * dx2) / x2,
                (-ru1 + z1u * dx1) / s1, (-ru2 + z2u * dx2) / s2,
            )

        def max_step(d):
            dx1, dx2, _, dz1l, dz2l, dz1u, dz2u = d
            alpha = 1.0
            for val, dv in ((x1, dx1), (x2, dx2), (s1, -dx1), (s2, -dx2),
                            (z1l, dz1l), (z2l, dz2l), (z1u, dz1u), (z2u, dz2u)):
                neg = dv < 0
                if neg.any():
                    alpha = min(alpha, float(np.min(-val[neg] / dv[neg])))
            return alpha

        # predictor
        d = direction(x1 * z1l, x2 * z2l, s1 * z1u, s2 * z2u)
        a = max_step(d)
        dx1, dx2, _, dz1l, dz2l, dz1u, dz2u = d
        mu_aff = (
            (x1 + a * dx1) @ (z1l + a * dz1l) + (x2 + a * dx2) @ (z2l + a * dz2l)
            + (s1 - a * dx1) @ (z1u + a * dz1u) + (s2 - a * dx2) @ (z2u + a * dz2u)
        ) / (2 * m)
        sm = (mu_aff / mu) ** 3 * mu
        # corrector
        d = direction(
            x1 * z1l + dx1 * dz1l - sm, x2 * z2l + dx2 * dz2l - sm,
            s1 * z1u - dx1 * dz1u - sm, s2 * z2u - dx2 * dz2u - sm,
        )
        a = min(1.0, 0.99 * max_step(d))
        if a <= 0:
            break
        dx1, dx2, dnu, dz1l, dz2l, dz1u, dz2u = d
        x1 = x1 + a * dx1
        x2 = x2 + a * dx2
        nu += a * dnu
        z1l = z1l + a * dz1l
        z2l = z2l + a * dz2l
        z1u = z1u + a * dz1u
        z2u = z2u + a * dz2u
    return best[1] if best is not None else np.concatenate([x1, x2])


def _snap_feasible(beta: np.ndarray, C: float, n: int) -> np.ndarray:
    """Round near-bound values onto the box and restore sum(alpha) == sum(alpha*)."""
    beta = np.clip(beta, 0.0, C)
    thr = 1e-7 * C
    beta[beta < thr] = 0.0
    beta[beta > C - thr] = C
    excess = beta[:n].sum() - beta[n:].sum()
    # shave the excess off whichever side is too large, largest entries first
    side = slice(0, n) if excess > 0 else slice(n, 2 * n)
    part = beta[side]
    for idx in np.argsort(-part, kind="stable"):
        if abs(excess) <= 0:
            break
        take = min(part[idx], abs(excess))
        part[idx] -= take
        excess -= take if excess > 0 else -take
    beta[side] = part
    return beta


def _smo(K: np.ndarray, y: np.ndarray, C: float, eps: float, tol: float, max_iter: int, beta0=None):
    n = len(y)
    beta = np.zeros(2 * n) if beta0 is None else np.array(beta0, dtype=np.float64)
    G, it, converged = _smo_loop(K, y, float(C), float(eps), float(tol), int(max_iter), beta)
    z = np.concatenate([np.ones(n), -np.ones(n)])

    # bias: average over free variables, else midpoint of the feasible interval
    zG = z * G
    at_ub = beta >= C
    at_lb = beta <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        rho = float(zG[free].mean())
    else:
        ub_mask = (at_ub & (z < 0)) | (at_lb & (z > 0))
        lb_mask = (at_ub & (z > 0)) | (at_lb & (z < 0))
        ub = zG[ub_mask].min() if ub_mask.any() else np.inf
        lb = zG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return beta, -rho, it, converged


def train_epsilon_svr(X, y, cfg: SvrConfig = SvrConfig()) -> SvrModel:
    """Fit a linear epsilon-SVR.

    With ``cfg.standardize`` the weights live in the standardized feature
    space (the space RFE scores are computed in); ``SvrModel.transform``
    maps raw inputs into it.  A model that hits ``max_iter`` is returned
    with ``converged=False`` and a ``NotConvergedWarning`` is emitted.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise DegenerateInput(f"X must be 2-D, got shape {X.shape}")
    n, m = X.shape
    if n < 2:
        raise DegenerateInput(f"need at least 2 samples, got {n}")
    if m < 1:
        raise DegenerateInput("need at least 1 feature")
    if len(y) != n:
        raise DegenerateInput(f"y has {len(y)} entries for {n} samples")
    if not np.isfinite(y).all() or not np.isfinite(X).all():
        raise DegenerateInput("X and y must be finite")

    center = scale = None
    Z = X
    if cfg.standardize:
        Z, center, scale = standardize_columns(X)

    K = Z @ Z.T
    start = None
    if cfg.method == "ipm":
        # near-degenerate Newton systems can produce inf/nan; the loop detects
        # that and keeps its last finite iterate, which SMO then polishes
        with np.errstate(divide="ignore", invalid="ignore"):
            start = _snap_feasible(_interior_point(Z, y, cfg.C, cfg.epsilon), cfg.C, n)
    beta, b, it, converged = _smo(K, y, cfg.C, cfg.epsilon, cfg.tol, cfg.max_iter, start)
    coef = beta[:n] - beta[n:]
    w = Z.T @ coef
    b = _best_bias(y - Z @ w, cfg.C, cfg.epsilon, b)
    obj = primal_objective(Z, y, w, b, cfg.C, cfg.epsilon)
    model = SvrModel(w, b, coef, obj, it, converged, 0.0, center, scale)
    viol = kkt_violation(model, X, y, cfg.C, cfg.epsilon)
    model = SvrModel(w, b, coef, obj, it, converged, viol, center, scale)
    if not converged:
        warnings.warn(
            f"epsilon-SVR stopped after {it} iterations without reaching tol={cfg.tol}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return model


def svr_feature_scores(model: SvrModel) -> np.ndarray:
    """Squared-weight ranking criterion, one score per feature."""
    return np.asarray(model.weights, dtype=np.float64) ** 2
