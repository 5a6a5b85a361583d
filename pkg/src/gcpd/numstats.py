"""Deterministic numerical kernels.

Dense linear algebra (Cholesky, support-restricted least squares),
multivariate normal sampling, chi-square distribution helpers and the
Kolmogorov-Smirnov goodness-of-fit test. Everything operates on plain
float64 numpy arrays; matrices are immutable by convention (no routine
mutates its inputs). Randomness enters only through :class:`Rng`, whose
child streams are statistically independent and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import gammainc

from .errors import EmptySample, NotPositiveDefinite, SingularDesign

__all__ = [
    "Rng",
    "KsResult",
    "cholesky",
    "sample_mvn",
    "chisq_cdf",
    "chisq_sample",
    "ks_test",
    "ols_on_support",
]

# Relative pivot floor for Cholesky factorisations.
PIVOT_RTOL = 1e-12
# Relative symmetry tolerance accepted by cholesky().
SYMMETRY_RTOL = 1e-10


class Rng:
    """Reproducible random stream with derivable sub-streams.

    A stream is identified by ``(seed, stream)``. :meth:`generator` returns a
    fresh numpy ``Generator`` positioned at the start of the stream, so
    repeated calls replay identical draws. :meth:`child` derives a
    statistically independent stream; children of children extend the
    derivation path, which keeps concurrent consumers collision-free.
    """

    __slots__ = ("seed", "path")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.path: tuple[int, ...] = (int(stream),)

    @classmethod
    def _with_path(cls, seed: int, path: tuple[int, ...]) -> "Rng":
        rng = object.__new__(cls)
        rng.seed = seed
        rng.path = path
        return rng

    def child(self, index: int) -> "Rng":
        """Derive the ``index``-th independent sub-stream."""
        return Rng._with_path(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        """Fresh generator at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.default_rng(seq)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Rng(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class KsResult:
    """Outcome of a one-sample Kolmogorov-Smirnov test."""

    statistic: float
    p_value: float
    n: int


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def cholesky(m) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == m``.

    ``m`` must be square and symmetric up to a relative tolerance of
    ``1e-10``. Raises :class:`NotPositiveDefinite` when any pivot falls at or
    below ``1e-12`` times the largest diagonal entry.
    """
    a = _as_matrix(m)
    p = a.shape[0]
    if a.shape[1] != p:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    scale = np.abs(a).max()
    if np.abs(a - a.T).max() > SYMMETRY_RTOL * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric within tolerance")

    max_diag = a.diagonal().max()
    floor = PIVOT_RTOL * max(max_diag, 0.0)
    L = np.zeros_like(a)
    for j in range(p):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= floor:
            raise NotPositiveDefinite(
                f"pivot {d:.6e} at index {j} is at or below {floor:.6e}"
            )
        L[j, j] = math.sqrt(d)
        if j + 1 < p:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def _check_lower_triangular(chol: np.ndarray) -> None:
    upper = np.triu(chol, k=1)
    if upper.size and np.abs(upper).max() > 1e-12 * max(np.abs(chol).max(), 1e-300):
        raise ValueError("factor must be lower-triangular")


def sample_mvn(chol, n: int, rng: Rng) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from N(0, chol @ chol.T).

    Deterministic given ``rng``: the same stream always yields the same
    matrix.
    """
    L = _as_matrix(chol, "chol")
    if L.shape[0] != L.shape[1]:
        raise ValueError("chol must be square")
    _check_lower_triangular(L)
    if n < 1:
        raise ValueError("n must be >= 1")
    draws = rng.generator().standard_normal((int(n), L.shape[0]))
    return draws @ L.T


def chisq_cdf(x, k: int):
    """CDF of the chi-square distribution with ``k`` degrees of freedom.

    Regularized lower incomplete gamma at (k/2, x/2); zero for x <= 0.
    Accepts scalars or arrays.
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    arr = np.asarray(x, dtype=float)
    out = gammainc(k / 2.0, np.maximum(arr, 0.0) / 2.0)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def chisq_sample(k: int, rng: Rng, size=None):
    """Chi-square draws with ``k`` degrees of freedom (mean k, variance 2k)."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    draws = rng.generator().chisquare(int(k), size=size)
    if size is None:
        return float(draws)
    return draws


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function 2*sum (-1)^{j-1} exp(-2 j^2 lam^2).

    Terms are accumulated until they drop below 1e-10; the result is clamped
    to [0, 1].
    """
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < 1e-10 or j >= 100_000:
            break
        sign = -sign
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(sample: Sequence[float] | np.ndarray, cdf: Callable) -> KsResult:
    """One-sample Kolmogorov-Smirnov test of ``sample`` against ``cdf``.

    The statistic is the classical sup-distance between the empirical CDF and
    ``cdf`` evaluated at the order statistics. The p-value uses the
    asymptotic Kolmogorov series evaluated at
    ``D * (sqrt(n) + 0.12 + 0.11 / sqrt(n))`` (Stephens' small-sample
    adjustment).
    """
    xs = np.sort(np.asarray(sample, dtype=float))
    n = xs.size
    if n == 0:
        raise EmptySample("ks_test requires a nonempty sample")
    try:
        f = np.asarray(cdf(xs), dtype=float)
        if f.shape != xs.shape:
            raise TypeError
    except TypeError:
        f = np.array([float(cdf(v)) for v in xs])
    i = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1.0) / n)
    d = float(max(d_plus, d_minus, 0.0))
    sqrt_n = math.sqrt(n)
    lam = d * (sqrt_n + 0.12 + 0.11 / sqrt_n)
    return KsResult(statistic=d, p_value=_kolmogorov_sf(lam), n=n)


def _solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    # forward substitution; L is lower-triangular with positive diagonal
    x = np.zeros_like(b)
    for i in range(L.shape[0]):
        x[i] = (b[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def _solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.zeros_like(b)
    for i in range(U.shape[0] - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x


def ols_on_support(x, y, support: Iterable[int]) -> np.ndarray:
    """Least squares restricted to ``support``; zeros elsewhere.

    Solves the normal equations of the column-restricted design by Cholesky
    factorisation and returns a coefficient vector of length ``x.shape[1]``.
    Raises :class:`SingularDesign` when the restricted Gram matrix is not
    positive definite (collinear or over-saturated support).
    """
    a = _as_matrix(x, "x")
    yv = np.asarray(y, dtype=float)
    if yv.ndim != 1 or yv.size != a.shape[0]:
        raise ValueError("y must be a vector with one entry per row of x")
    idx = np.asarray(sorted(set(int(j) for j in support)), dtype=int)
    beta = np.zeros(a.shape[1])
    if idx.size == 0:
        return beta
    if idx.min() < 0 or idx.max() >= a.shape[1]:
        raise ValueError("support indices out of range")
    xs = a[:, idx]
    gram = xs.T @ xs
    try:
        L = cholesky(gram)
    except NotPositiveDefinite as exc:
        raise SingularDesign(f"restricted Gram matrix is singular: {exc}") from exc
    rhs = xs.T @ yv
    beta[idx] = _solve_upper(L.T, _solve_lower(L, rhs))
    return beta
