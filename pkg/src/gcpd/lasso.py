"""L1-regularized neighborhood regression and BIC tuning.

Each column of the data is regressed on all remaining columns, separately
for the two segments induced by a candidate split. All per-column problems
within a segment share one Gram matrix, so the solver runs cyclic coordinate
descent on a p-by-p coefficient matrix (column j = coefficients of response
j, diagonal pinned to zero) and updates every response at once. A fit counts
as converged only when the largest coordinate move in a sweep drops below
``tol`` *and* the stationarity (KKT) residuals are within ``10 * tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

try:  # optional JIT for the hot coordinate-descent kernel
    from numba import njit
except ImportError:  # pragma: no cover - plain numpy fallback
    njit = None

from .errors import UserInputError

__all__ = [
    "LassoConfig",
    "LassoResult",
    "EdgeEstimates",
    "BicResult",
    "default_lambda_grid",
    "lasso_fit",
    "kkt_violation",
    "neighborhood_fit",
    "bic_select",
]


def default_lambda_grid(size: int = 75) -> np.ndarray:
    """``size`` equally spaced penalty values strictly inside (0, 1)."""
    if size < 1:
        raise UserInputError("lambda grid size must be >= 1")
    return np.arange(1, size + 1, dtype=float) / (size + 1)


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings: convergence threshold, sweep cap and penalty grid."""

    tol: float = 1e-7
    max_iter: int = 10_000
    lambda_grid: np.ndarray = field(default_factory=default_lambda_grid)

    def __post_init__(self):
        if self.tol <= 0:
            raise UserInputError("tol must be positive")
        if self.max_iter < 1:
            raise UserInputError("max_iter must be >= 1")
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise UserInputError("lambda_grid must be a nonempty 1-d sequence")
        if np.any(np.diff(grid) < 0):
            raise UserInputError("lambda_grid must be ascending")
        if grid[0] <= 0.0 or grid[-1] >= 1.0:
            raise UserInputError("lambda_grid values must lie in (0, 1)")
        object.__setattr__(self, "lambda_grid", grid)


class LassoResult(NamedTuple):
    coef: np.ndarray
    converged: bool
    sweeps: int
    objective_path: list | None = None


class EdgeEstimates:
    """Per-column regression coefficients for one segment.

    Stored as a p-by-p matrix whose column ``j`` holds the coefficients of
    the regression of column ``j`` on the others, indexed by the regressor's
    global column id; the diagonal is identically zero (self-exclusion).
    """

    __slots__ = ("matrix", "tau_used", "lambda_used", "converged", "fallback_columns")

    def __init__(self, matrix: np.ndarray, tau_used: float, lambda_used: float,
                 converged: bool = True, fallback_columns: tuple[int, ...] = ()):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("coefficient matrix must be square")
        if np.any(matrix.diagonal() != 0.0):
            raise ValueError("self-coordinates must be zero")
        self.matrix = matrix
        self.tau_used = float(tau_used)
        self.lambda_used = float(lambda_used)
        self.converged = bool(converged)
        self.fallback_columns = tuple(fallback_columns)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def vector(self, j: int) -> np.ndarray:
        """Length p-1 coefficient vector of response ``j`` (self removed)."""
        return np.delete(self.matrix[:, j], j)

    def support(self, j: int) -> np.ndarray:
        """Global column ids with nonzero coefficient in regression ``j``."""
        return np.flatnonzero(self.matrix[:, j])

    def supports(self) -> list[np.ndarray]:
        return [self.support(j) for j in range(self.p)]

    def to_dict(self) -> dict:
        cols = []
        for j in range(self.p):
            sup = self.support(j)
            cols.append({
                "support": [int(k) for k in sup],
                "values": [float(v) for v in self.matrix[sup, j]],
            })
        return {
            "tau_used": self.tau_used,
            "lambda_used": self.lambda_used,
            "converged": self.converged,
            "fallback_columns": list(self.fallback_columns),
            "columns": cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EdgeEstimates":
        cols = d["columns"]
        p = len(cols)
        matrix = np.zeros((p, p))
        for j, col in enumerate(cols):
            for k, v in zip(col["support"], col["values"]):
                matrix[int(k), j] = float(v)
        return cls(
            matrix,
            tau_used=d["tau_used"],
            lambda_used=d["lambda_used"],
            converged=d.get("converged", True),
            fallback_columns=tuple(d.get("fallback_columns", ())),
        )


def _soft(x: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _matrix_kkt_violation(gram: np.ndarray, b: np.ndarray, n: int, lam: float) -> float:
    """Largest stationarity residual of the shared-Gram problem.

    For active entries |(2/n) x_k' r - lam * sign(b)| should vanish; for
    inactive ones |(2/n) x_k' r| must not exceed lam.
    """
    p = gram.shape[0]
    resid_corr = (2.0 / n) * (gram - gram @ b)
    off = ~np.eye(p, dtype=bool)
    active = off & (b != 0.0)
    inactive = off & (b == 0.0)
    worst = 0.0
    if active.any():
        worst = float(np.abs(resid_corr[active] - lam * np.sign(b[active])).max())
    if inactive.any():
        worst = max(worst, float(np.abs(resid_corr[inactive]).max() - lam))
    return max(worst, 0.0)


def _sweeps_numpy(gram: np.ndarray, diag: np.ndarray, alive: np.ndarray,
                  half: float, b: np.ndarray, v: np.ndarray,
                  tol: float, max_sweeps: int) -> tuple[int, bool]:
    p = gram.shape[0]
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for k in range(p):
            if not alive[k]:
                continue
            rho = gram[k] - v[k] + diag[k] * b[k]
            new_row = _soft(rho, half) / diag[k]
            new_row[k] = 0.0
            delta = new_row - b[k]
            if delta.any():
                move = float(np.abs(delta).max())
                if move > biggest:
                    biggest = move
                v += np.outer(gram[:, k], delta)
                b[k] = new_row
        if biggest < tol:
            return sweep, True
    return max_sweeps, False


if njit is not None:

    @njit(cache=True)
    def _sweeps_jit(gram, diag, alive, half, b, v, tol, max_sweeps):  # pragma: no cover
        p = gram.shape[0]
        for sweep in range(1, max_sweeps + 1):
            biggest = 0.0
            for k in range(p):
                if not alive[k]:
                    continue
                dk = diag[k]
                for j in range(p):
                    if j == k:
                        continue
                    rho = gram[k, j] - v[k, j] + dk * b[k, j]
                    if rho > half:
                        new = (rho - half) / dk
                    elif rho < -half:
                        new = (rho + half) / dk
                    else:
                        new = 0.0
                    d = new - b[k, j]
                    if d != 0.0:
                        ad = abs(d)
                        if ad > biggest:
                            biggest = ad
                        for i in range(p):
                            v[i, j] += gram[i, k] * d
                        b[k, j] = new
            if biggest < tol:
                return sweep, True
        return max_sweeps, False

    _sweeps = _sweeps_jit
else:  # pragma: no cover
    _sweeps = _sweeps_numpy


def _cd_matrix(gram: np.ndarray, n: int, lam: float, b: np.ndarray,
               tol: float, max_iter: int) -> tuple[np.ndarray, bool, int]:
    """Cyclic coordinate descent over all responses at once.

    ``b`` is updated in place (warm start) and returned together with the
    convergence flag and the number of sweeps used. Sweeps continue until
    the largest coordinate move falls below ``tol`` and the stationarity
    residuals (recomputed from a fresh Gram product) are within
    ``10 * tol``.
    """
    gram = np.ascontiguousarray(gram)
    diag = np.ascontiguousarray(gram.diagonal())
    alive = diag > 0.0
    half = 0.5 * n * lam
    v = gram @ b
    used = 0
    while used < max_iter:
        sweeps, hit_tol = _sweeps(gram, diag, alive, half, b, v,
                                  tol, max_iter - used)
        used += sweeps
        if not hit_tol:
            break
        if _matrix_kkt_violation(gram, b, n, lam) <= 10.0 * tol:
            return b, True, used
        v = gram @ b  # refresh accumulated drift before continuing
    return b, False, used


def kkt_violation(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Stationarity residual of a single-response fit, recomputed from raw data."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n = x.shape[0]
    r = y - x @ beta
    grad = (2.0 / n) * (x.T @ r)
    worst = 0.0
    active = beta != 0.0
    if active.any():
        worst = float(np.abs(grad[active] - lam * np.sign(beta[active])).max())
    if (~active).any():
        worst = max(worst, float(np.abs(grad[~active]).max() - lam))
    return max(worst, 0.0)


def lasso_fit(x, y, lam: float, cfg: LassoConfig | None = None,
              beta0: np.ndarray | None = None,
              collect_objective: bool = False) -> LassoResult:
    """Minimize (1/n) ||y - x beta||^2 + lam ||beta||_1 by coordinate descent.

    Returns the best iterate with ``converged=False`` when ``max_iter``
    sweeps were exhausted before the move-size and stationarity checks both
    passed. ``collect_objective`` records the penalized objective after every
    sweep (diagnostic; used to verify monotone descent).
    """
    cfg = cfg or LassoConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError("x must be a matrix")
    if y.ndim != 1 or y.size != x.shape[0]:
        raise ValueError("y must be a vector with one entry per row of x")
    if lam < 0:
        raise UserInputError("lambda must be nonnegative")
    n, q = x.shape
    gram = x.T @ x
    corr = x.T @ y
    yy = float(y @ y)
    diag = gram.diagonal().copy()
    alive = diag > 0.0
    half = 0.5 * n * lam
    beta = np.zeros(q) if beta0 is None else np.array(beta0, dtype=float)
    v = gram @ beta
    objective = []

    def _obj():
        rss = yy - 2.0 * float(beta @ corr) + float(beta @ (gram @ beta))
        return rss / n + lam * float(np.abs(beta).sum())

    for sweep in range(1, cfg.max_iter + 1):
        biggest = 0.0
        for k in range(q):
            if not alive[k]:
                continue
            rho = corr[k] - v[k] + diag[k] * beta[k]
            new = math.copysign(max(abs(rho) - half, 0.0), rho) / diag[k]
            delta = new - beta[k]
            if delta != 0.0:
                move = abs(delta)
                if move > biggest:
                    biggest = move
                v += gram[:, k] * delta
                beta[k] = new
        if collect_objective:
            objective.append(_obj())
        if biggest < cfg.tol:
            grad = (2.0 / n) * (corr - gram @ beta)
            worst = 0.0
            active = beta != 0.0
            if active.any():
                worst = float(np.abs(grad[active] - lam * np.sign(beta[active])).max())
            if (~active).any():
                worst = max(worst, float(np.abs(grad[~active]).max() - lam))
            if worst <= 10.0 * cfg.tol:
                return LassoResult(beta, True, sweep, objective if collect_objective else None)
    return LassoResult(beta, False, cfg.max_iter, objective if collect_objective else None)


def _split_index(T: int, tau: float) -> int:
    k = math.floor(T * tau)
    if k < 2 or T - k < 2:
        raise UserInputError(
            f"split fraction {tau} leaves a segment with fewer than 2 rows (T={T})"
        )
    return k


def _fit_segment(z_seg: np.ndarray, lam: float, cfg: LassoConfig,
                 warm: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    n = z_seg.shape[0]
    gram = z_seg.T @ z_seg
    b = np.zeros_like(gram) if warm is None else warm
    b, converged, _ = _cd_matrix(gram, n, lam, b, cfg.tol, cfg.max_iter)
    return b, converged


def neighborhood_fit(z, tau: float, lam: float,
                     cfg: LassoConfig | None = None) -> tuple[EdgeEstimates, EdgeEstimates]:
    """Lasso regressions of every column on the rest, for both segments.

    The same penalty ``lam`` is shared by all 2p regressions. Returns the
    pre-split and post-split estimates.
    """
    cfg = cfg or LassoConfig()
    z = np.asarray(z, dtype=float)
    k = _split_index(z.shape[0], tau)
    b_pre, ok_pre = _fit_segment(z[:k], lam, cfg)
    b_post, ok_post = _fit_segment(z[k:], lam, cfg)
    return (
        EdgeEstimates(b_pre, tau_used=tau, lambda_used=lam, converged=ok_pre),
        EdgeEstimates(b_post, tau_used=tau, lambda_used=lam, converged=ok_post),
    )


@dataclass(frozen=True)
class BicResult:
    """Outcome of a BIC sweep over the penalty grid."""

    lambda_: float
    mu: EdgeEstimates
    gamma: EdgeEstimates
    grid: np.ndarray
    bic_values: np.ndarray


def bic_values_for_fit(z: np.ndarray, k: int, b_pre: np.ndarray,
                       b_post: np.ndarray) -> float:
    """Independent BIC recomputation from residuals (test oracle)."""
    z = np.asarray(z, dtype=float)
    T = z.shape[0]
    e_pre = z[:k] - z[:k] @ b_pre
    e_post = z[k:] - z[k:] @ b_post
    size = int(np.count_nonzero((b_pre != 0.0) | (b_post != 0.0)))
    return float((e_pre**2).sum() + (e_post**2).sum() + size * math.log(T))


def bic_select(z, tau: float, cfg: LassoConfig | None = None) -> BicResult:
    """Pick the penalty minimizing RSS(pre) + RSS(post) + |S| log T.

    |S| counts, over all responses, the union of the pre- and post-segment
    supports (an edge active in both segments counts once). The grid is
    traversed from its largest value downward with warm starts; ties are
    broken toward the smallest penalty.
    """
    cfg = cfg or LassoConfig()
    z = np.asarray(z, dtype=float)
    T, p = z.shape
    k = _split_index(T, tau)
    z_pre, z_post = z[:k], z[k:]
    gram_pre = z_pre.T @ z_pre
    gram_post = z_post.T @ z_post
    n_pre, n_post = k, T - k
    log_t = math.log(T)

    b_pre = np.zeros((p, p))
    b_post = np.zeros((p, p))
    grid_desc = cfg.lambda_grid[::-1]
    bic_desc = np.empty(grid_desc.size)
    best = None  # (bic, lam, copies, flags)
    for i, lam in enumerate(grid_desc):
        b_pre, ok_pre, _ = _cd_matrix(gram_pre, n_pre, float(lam), b_pre, cfg.tol, cfg.max_iter)
        b_post, ok_post, _ = _cd_matrix(gram_post, n_post, float(lam), b_post, cfg.tol, cfg.max_iter)
        rss_pre = float(np.trace(gram_pre) - 2.0 * np.sum(b_pre * gram_pre)
                        + np.sum(b_pre * (gram_pre @ b_pre)))
        rss_post = float(np.trace(gram_post) - 2.0 * np.sum(b_post * gram_post)
                         + np.sum(b_post * (gram_post @ b_post)))
        size = int(np.count_nonzero((b_pre != 0.0) | (b_post != 0.0)))
        bic = rss_pre + rss_post + size * log_t
        bic_desc[i] = bic
        # descending traversal: "<=" keeps the smallest penalty on exact ties
        if best is None or bic <= best[0]:
            best = (bic, float(lam), b_pre.copy(), b_post.copy(), ok_pre, ok_post)

    _, lam_star, bp, bq, ok_pre, ok_post = best
    mu = EdgeEstimates(bp, tau_used=tau, lambda_used=lam_star, converged=ok_pre)
    gamma = EdgeEstimates(bq, tau_used=tau, lambda_used=lam_star, converged=ok_post)
    return BicResult(
        lambda_=lam_star,
        mu=mu,
        gamma=gamma,
        grid=cfg.lambda_grid.copy(),
        bic_values=bic_desc[::-1].copy(),
    )
