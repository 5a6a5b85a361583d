"""Post-estimation inference: interval construction for the split index.

After the final split estimate, the lasso coefficients are refitted by
ordinary least squares on their selected supports. From the refits come the
aggregate jump size, plug-in drift parameters (quadratic forms in the
segment sample covariances) and two per-row prediction series whose segment
variances feed the limit laws:

* vanishing-jump regime: the split error behaves like the argmax of a
  two-sided drifted Brownian motion; quantiles are obtained by simulating
  discretized paths.
* non-vanishing regime: the error behaves like the argmax of a two-sided
  negative-drift random walk whose increment law is fitted empirically as a
  negative centered-and-scaled chi-square via the KS test.

Margins of error follow the regime's quantile; intervals are symmetric about
the estimated index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .changepoint import ChangePointFit
from .errors import (
    HorizonTooSmall,
    SegmentTooShort,
    SingularDesign,
    UserInputError,
    ZeroJump,
)
from .lasso import EdgeEstimates
from .numstats import Rng, chisq_cdf, ks_test, ols_on_support

__all__ = [
    "RegimeParams",
    "ConfidenceInterval",
    "ZetaSeries",
    "VanishingMcSettings",
    "NonvanishingMcSettings",
    "refit",
    "jump_stats",
    "drift_estimates",
    "zeta_series",
    "variance_estimates",
    "fit_increment_law",
    "vanishing_argmax_samples",
    "nonvanishing_argmax_samples",
    "empirical_upper_quantile",
    "quantile_vanishing",
    "quantile_nonvanishing",
    "confidence_interval",
    "estimate_regime_params",
    "REGIME_VANISHING",
    "REGIME_NONVANISHING",
]

REGIME_VANISHING = "vanishing"
REGIME_NONVANISHING = "nonvanishing"

# Jump sizes below this trigger the low-signal error path (the margin of
# error formula divides by the squared jump size).
ZERO_JUMP_THRESHOLD = 1e-8

# Fraction of paths allowed to peak in the outer 10% of the horizon.
ESCAPE_LIMIT = 1e-3


@dataclass(frozen=True)
class RegimeParams:
    """Estimated drift/variance parameters and the fitted increment law."""

    xi22: float
    psi: float
    sigma1_sq: float
    sigma2_sq: float
    sigma1_star_sq: float
    sigma2_star_sq: float
    bar_sigma1_sq: float
    bar_sigma2_sq: float
    df: int
    ks_pvalue: float

    def to_dict(self) -> dict:
        return {
            "xi22": self.xi22,
            "psi": self.psi,
            "sigma1_sq": self.sigma1_sq,
            "sigma2_sq": self.sigma2_sq,
            "sigma1_star_sq": self.sigma1_star_sq,
            "sigma2_star_sq": self.sigma2_star_sq,
            "bar_sigma1_sq": self.bar_sigma1_sq,
            "bar_sigma2_sq": self.bar_sigma2_sq,
            "df": self.df,
            "ks_pvalue": self.ks_pvalue,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeParams":
        return cls(
            xi22=float(d["xi22"]),
            psi=float(d["psi"]),
            sigma1_sq=float(d["sigma1_sq"]),
            sigma2_sq=float(d["sigma2_sq"]),
            sigma1_star_sq=float(d["sigma1_star_sq"]),
            sigma2_star_sq=float(d["sigma2_star_sq"]),
            bar_sigma1_sq=float(d["bar_sigma1_sq"]),
            bar_sigma2_sq=float(d["bar_sigma2_sq"]),
            df=int(d["df"]),
            ks_pvalue=float(d["ks_pvalue"]),
        )


@dataclass(frozen=True)
class ConfidenceInterval:
    """Symmetric interval on the integer time scale."""

    regime: str
    alpha: float
    center_index: int
    margin: float
    lo: float
    hi: float

    def contains(self, k: float) -> bool:
        return self.lo <= k <= self.hi

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "alpha": self.alpha,
            "center_index": self.center_index,
            "margin": self.margin,
            "lo": self.lo,
            "hi": self.hi,
        }


@dataclass(frozen=True)
class ZetaSeries:
    """Per-row prediction series used for variance estimation.

    ``linear_part`` is the normalized cross term (residual times predicted
    jump contrast); ``full_part`` adds the quadratic correction that matters
    in the non-vanishing regime.
    """

    linear_part: np.ndarray
    full_part: np.ndarray
    split_index: int

    def __post_init__(self):
        if self.linear_part.shape != self.full_part.shape:
            raise ValueError("series must have equal length")
        if not 1 <= self.split_index <= self.linear_part.size - 1:
            raise ValueError("split index out of range")


@dataclass(frozen=True)
class VanishingMcSettings:
    """Discretized Brownian-path simulation settings."""

    n_paths: int = 20_000
    step: float = 0.01
    horizon: float = 50.0
    block: int = 2_000

    def __post_init__(self):
        if self.n_paths < 1 or self.step <= 0 or self.horizon <= self.step:
            raise UserInputError("invalid Monte Carlo settings")


@dataclass(frozen=True)
class NonvanishingMcSettings:
    """Two-sided random-walk simulation settings."""

    n_paths: int = 3_000
    horizon: int = 1_000
    block: int = 3_000

    def __post_init__(self):
        if self.n_paths < 1 or self.horizon < 1:
            raise UserInputError("invalid Monte Carlo settings")


def refit(z, k: int, mu_hat: EdgeEstimates,
          gamma_hat: EdgeEstimates) -> tuple[EdgeEstimates, EdgeEstimates]:
    """OLS re-estimation on the lasso supports, segment by segment.

    Columns whose restricted design is singular (including supports larger
    than the segment allows) keep their lasso coefficients and are listed in
    ``fallback_columns``.
    """
    z = np.asarray(z, dtype=float)
    T, p = z.shape
    if not 2 <= k <= T - 2:
        raise UserInputError(f"split {k} leaves a segment with fewer than 2 rows")

    def _refit_segment(seg: np.ndarray, source: EdgeEstimates) -> EdgeEstimates:
        out = np.zeros((p, p))
        fallback = []
        for j in range(p):
            support = source.support(j)
            if support.size == 0:
                continue
            try:
                out[:, j] = ols_on_support(seg, seg[:, j], support)
            except SingularDesign:
                out[:, j] = source.matrix[:, j]
                fallback.append(j)
        return EdgeEstimates(
            out,
            tau_used=source.tau_used,
            lambda_used=source.lambda_used,
            converged=source.converged,
            fallback_columns=tuple(fallback),
        )

    return _refit_segment(z[:k], mu_hat), _refit_segment(z[k:], gamma_hat)


def jump_stats(mu_tilde: EdgeEstimates,
               gamma_tilde: EdgeEstimates) -> tuple[np.ndarray, float, float]:
    """Column-wise coefficient contrasts and their aggregate norm.

    Returns the p-by-p contrast matrix (column j = pre minus post
    coefficients of response j), its Frobenius norm, and the norm divided by
    sqrt(p) (the jump size).
    """
    if mu_tilde.p != gamma_tilde.p:
        raise ValueError("dimension mismatch")
    eta = mu_tilde.matrix - gamma_tilde.matrix
    xi22 = math.sqrt(float((eta**2).sum()))
    return eta, xi22, xi22 / math.sqrt(mu_tilde.p)


def _segment_covariance(seg: np.ndarray) -> np.ndarray:
    # mean subtracted, divided by the segment length
    centered = seg - seg.mean(axis=0)
    return (centered.T @ centered) / seg.shape[0]


def drift_estimates(eta: np.ndarray, z, k: int, xi22: float) -> tuple[float, float]:
    """Plug-in drift parameters from segment sample covariances.

    Each is the normalized sum over responses of the quadratic form of the
    coefficient contrast in the segment covariance (self row/column drop out
    because the contrast diagonal is zero).
    """
    if xi22 <= 0.0:
        raise ZeroJump("zero jump size; drift parameters are undefined")
    z = np.asarray(z, dtype=float)
    T = z.shape[0]
    if not 2 <= k <= T - 2:
        raise SegmentTooShort("both segments need at least 2 rows")
    s_pre = _segment_covariance(z[:k])
    s_post = _segment_covariance(z[k:])
    quad_pre = float(np.sum(eta * (s_pre @ eta)))
    quad_post = float(np.sum(eta * (s_post @ eta)))
    return quad_pre / xi22**2, quad_post / xi22**2


def zeta_series(z, k: int, mu_tilde: EdgeEstimates, gamma_tilde: EdgeEstimates,
                eta: np.ndarray, xi22: float) -> ZetaSeries:
    """Predicted per-row realizations of the limit-law increments.

    Residuals use the pre-split coefficients before ``k`` and the post-split
    coefficients after it. The linear part is the residual-contrast cross
    term scaled by the aggregate jump norm; the full part subtracts the
    quadratic contrast term and scales by the dimension.
    """
    if xi22 <= 0.0:
        raise ZeroJump("zero jump size; predicted realizations are undefined")
    z = np.asarray(z, dtype=float)
    T, p = z.shape
    if not 1 <= k <= T - 1:
        raise ValueError("split index out of range")
    resid = np.empty_like(z)
    resid[:k] = z[:k] - z[:k] @ mu_tilde.matrix
    resid[k:] = z[k:] - z[k:] @ gamma_tilde.matrix
    contrast = z @ eta
    cross = np.einsum("ij,ij->i", resid, contrast)
    quad = np.einsum("ij,ij->i", contrast, contrast)
    linear = cross / (xi22 * math.sqrt(p))
    full = (2.0 * cross - quad) / p
    # consistency between the two stored series (they share the cross term)
    recon = (2.0 * linear * xi22 * math.sqrt(p) - quad) / p
    scale = max(np.abs(full).max(), 1.0)
    if np.abs(full - recon).max() > 1e-10 * scale:
        raise AssertionError("zeta series identity violated")
    return ZetaSeries(linear_part=linear, full_part=full, split_index=int(k))


def _variance(x: np.ndarray) -> float:
    m = x.mean()
    return float(((x - m) ** 2).mean())


def variance_estimates(zs: ZetaSeries) -> tuple[float, float, float, float]:
    """Segment sample variances of both series (denominator = segment length).

    Returns (pre linear, post linear, pre full, post full).
    """
    k = zs.split_index
    n = zs.linear_part.size
    if k < 2 or n - k < 2:
        raise SegmentTooShort("both segments need at least 2 rows")
    return (
        _variance(zs.linear_part[:k]),
        _variance(zs.linear_part[k:]),
        _variance(zs.full_part[:k]),
        _variance(zs.full_part[k:]),
    )


def negative_scaled_chisq_cdf(x, df: int):
    """CDF of X = -(chisq_df - df) / sqrt(2 df) (mean 0, variance 1)."""
    arr = np.asarray(x, dtype=float)
    out = 1.0 - chisq_cdf(df - arr * math.sqrt(2.0 * df), df)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def fit_increment_law(zs: ZetaSeries,
                      k_grid: Iterable[int] | None = None) -> tuple[int, float]:
    """Best-fitting degrees of freedom for the standardized increment series.

    The full series is centered and scaled per segment, pooled, and tested
    against the negative centered-and-scaled chi-square family over
    ``k_grid`` (default 1..100). Returns the KS-p-value-maximizing degrees of
    freedom (smallest on ties) and that p-value.
    """
    grid = sorted(int(d) for d in k_grid) if k_grid is not None else list(range(1, 101))
    if not grid:
        raise UserInputError("degrees-of-freedom grid must be nonempty")
    k = zs.split_index
    n = zs.full_part.size
    if k < 2 or n - k < 2:
        raise SegmentTooShort("both segments need at least 2 rows")
    parts = []
    for seg in (zs.full_part[:k], zs.full_part[k:]):
        sd = math.sqrt(_variance(seg))
        if sd <= 0.0:
            raise ZeroJump("constant predicted realizations; no scale to standardize")
        parts.append((seg - seg.mean()) / sd)
    pooled = np.concatenate(parts)

    best_df, best_p = None, -1.0
    for df in grid:
        df = int(df)
        if df < 1:
            raise UserInputError("degrees of freedom must be positive")
        result = ks_test(pooled, lambda x, df=df: negative_scaled_chisq_cdf(x, df))
        if result.p_value > best_p:
            best_df, best_p = df, result.p_value
    return best_df, best_p


def empirical_upper_quantile(values: np.ndarray, level: float) -> float:
    """Smallest sample value v with (fraction of values <= v) >= level."""
    if not 0.0 < level < 1.0:
        raise UserInputError("quantile level must lie in (0, 1)")
    ordered = np.sort(np.asarray(values, dtype=float))
    rank = math.ceil(level * ordered.size) - 1
    return float(ordered[max(rank, 0)])


def _combine_sides(left_val, left_idx, right_val, right_idx, left_pos, right_pos):
    """Argmax over {origin} + left branch + right branch of each path.

    Ties prefer the origin, then the smaller |r|, then the negative side.
    ``left_pos``/``right_pos`` map branch indices to |r| locations.
    """
    take_zero = (left_val <= 0.0) & (right_val <= 0.0)
    left_beats_right = (left_val > right_val) | (
        (left_val == right_val) & (left_pos[left_idx] <= right_pos[right_idx])
    )
    return np.where(
        take_zero,
        0.0,
        np.where(left_beats_right, -left_pos[left_idx], right_pos[right_idx]),
    )


def _check_escape(argmax_abs: np.ndarray, horizon: float) -> None:
    frac = float((argmax_abs > 0.9 * horizon).mean())
    if frac > ESCAPE_LIMIT:
        raise HorizonTooSmall(
            f"{frac:.2%} of paths peak in the outer 10% of the horizon"
        )


def vanishing_argmax_samples(sigma1_star: float, sigma2_star: float,
                             sigma1_sq: float, sigma2_sq: float,
                             mc: VanishingMcSettings, rng: Rng) -> np.ndarray:
    """Argmax draws of the two-sided drifted Brownian limit process.

    Left branch: volatility 2, drift -1. Right branch: volatility
    2 * sigma2_star / sigma1_star, drift -(sigma2_sq / sigma1_sq). Paths are
    discretized with step ``mc.step`` out to ``mc.horizon`` on both sides.
    Raises :class:`HorizonTooSmall` when too many paths peak near the edge.
    """
    if min(sigma1_star, sigma2_star) <= 0 or min(sigma1_sq, sigma2_sq) <= 0:
        raise UserInputError("scale parameters must be positive")
    m = int(round(mc.horizon / mc.step))
    positions = np.arange(1, m + 1, dtype=float) * mc.step
    vol_right = 2.0 * sigma2_star / sigma1_star
    drift_right = sigma2_sq / sigma1_sq
    sqrt_step = math.sqrt(mc.step)
    gen = rng.generator()

    out = np.empty(mc.n_paths)
    done = 0
    while done < mc.n_paths:
        nb = min(mc.block, mc.n_paths - done)
        left = 2.0 * sqrt_step * np.cumsum(gen.standard_normal((nb, m)), axis=1)
        left -= positions
        left_idx = np.argmax(left, axis=1)
        left_val = left[np.arange(nb), left_idx]
        del left
        right = vol_right * sqrt_step * np.cumsum(gen.standard_normal((nb, m)), axis=1)
        right -= drift_right * positions
        right_idx = np.argmax(right, axis=1)
        right_val = right[np.arange(nb), right_idx]
        del right
        out[done : done + nb] = _combine_sides(
            left_val, left_idx, right_val, right_idx, positions, positions
        )
        done += nb
    _check_escape(np.abs(out), mc.horizon)
    return out


def nonvanishing_argmax_samples(psi: float, sigma1_sq: float, sigma2_sq: float,
                                bar_sigma1_sq: float, bar_sigma2_sq: float,
                                df: int, mc: NonvanishingMcSettings,
                                rng: Rng) -> np.ndarray:
    """Integer argmax draws of the two-sided negative-drift random walk.

    Increments are a negative centered-and-scaled chi-square with ``df``
    degrees of freedom, shifted to mean -psi^2 * drift and scaled to the
    segment's walk standard deviation.
    """
    if psi <= 0:
        raise ZeroJump("zero jump size; the walk has no drift")
    if min(sigma1_sq, sigma2_sq) <= 0 or min(bar_sigma1_sq, bar_sigma2_sq) <= 0:
        raise UserInputError("variance parameters must be positive")
    if df < 1:
        raise UserInputError("df must be >= 1")
    h = int(mc.horizon)
    positions = np.arange(1, h + 1, dtype=float)
    scale_root = math.sqrt(2.0 * df)
    sd_left = math.sqrt(bar_sigma1_sq)
    sd_right = math.sqrt(bar_sigma2_sq)
    drift_left = -(psi**2) * sigma1_sq
    drift_right = -(psi**2) * sigma2_sq
    gen = rng.generator()

    out = np.empty(mc.n_paths)
    done = 0
    while done < mc.n_paths:
        nb = min(mc.block, mc.n_paths - done)
        incr = -(gen.chisquare(df, (nb, h)) - df) / scale_root
        left = np.cumsum(drift_left + sd_left * incr, axis=1)
        left_idx = np.argmax(left, axis=1)
        left_val = left[np.arange(nb), left_idx]
        del left, incr
        incr = -(gen.chisquare(df, (nb, h)) - df) / scale_root
        right = np.cumsum(drift_right + sd_right * incr, axis=1)
        right_idx = np.argmax(right, axis=1)
        right_val = right[np.arange(nb), right_idx]
        del right, incr
        out[done : done + nb] = _combine_sides(
            left_val, left_idx, right_val, right_idx, positions, positions
        )
        done += nb
    _check_escape(np.abs(out), float(h))
    return out


def quantile_vanishing(alpha: float, sigma1_star: float, sigma2_star: float,
                       sigma1_sq: float, sigma2_sq: float,
                       mc: VanishingMcSettings | None = None,
                       rng: Rng | None = None) -> float:
    """Symmetric (1 - alpha) quantile of |argmax| of the Brownian limit law."""
    if not 0.0 < alpha < 1.0:
        raise UserInputError("alpha must lie in (0, 1)")
    mc = mc or VanishingMcSettings()
    rng = rng or Rng(0)
    samples = vanishing_argmax_samples(sigma1_star, sigma2_star,
                                       sigma1_sq, sigma2_sq, mc, rng)
    return empirical_upper_quantile(np.abs(samples), 1.0 - alpha)


def quantile_nonvanishing(alpha: float, params: RegimeParams,
                          mc: NonvanishingMcSettings | None = None,
                          rng: Rng | None = None) -> int:
    """Smallest integer m with empirical P(|argmax| <= m) >= 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise UserInputError("alpha must lie in (0, 1)")
    mc = mc or NonvanishingMcSettings()
    rng = rng or Rng(0)
    samples = nonvanishing_argmax_samples(
        params.psi, params.sigma1_sq, params.sigma2_sq,
        params.bar_sigma1_sq, params.bar_sigma2_sq, params.df, mc, rng,
    )
    return int(empirical_upper_quantile(np.abs(samples), 1.0 - alpha))


def confidence_interval(fit: ChangePointFit, params: RegimeParams, regime: str,
                        alpha: float, T: int,
                        mc_vanishing: VanishingMcSettings | None = None,
                        mc_nonvanishing: NonvanishingMcSettings | None = None,
                        rng: Rng | None = None) -> ConfidenceInterval:
    """Symmetric interval around the final split index for one regime.

    Vanishing: margin = quantile * (linear-part variance) / (drift^2 * jump^2).
    Non-vanishing: margin = the integer walk quantile itself.
    """
    if fit.T != T:
        raise UserInputError("fit was computed for a different T")
    if params.psi < ZERO_JUMP_THRESHOLD:
        raise ZeroJump("jump size too small for interval inference")
    center = fit.k_final
    if regime == REGIME_VANISHING:
        q = quantile_vanishing(
            alpha,
            math.sqrt(params.sigma1_star_sq),
            math.sqrt(params.sigma2_star_sq),
            params.sigma1_sq,
            params.sigma2_sq,
            mc_vanishing,
            rng,
        )
        margin = q * params.sigma1_star_sq / (params.sigma1_sq**2 * params.psi**2)
    elif regime == REGIME_NONVANISHING:
        margin = float(quantile_nonvanishing(alpha, params, mc_nonvanishing, rng))
    else:
        raise UserInputError(f"unknown regime {regime!r}")
    return ConfidenceInterval(
        regime=regime,
        alpha=alpha,
        center_index=center,
        margin=margin,
        lo=center - margin,
        hi=center + margin,
    )


def estimate_regime_params(z, fit: ChangePointFit,
                           df_grid: Iterable[int] | None = None) -> RegimeParams:
    """Full post-estimation pipeline from data and a fitted split.

    Refits the selected supports by OLS, then derives jump size, drift
    parameters, prediction-series variances and the fitted increment law.
    Raises :class:`ZeroJump` when the refitted jump size is numerically zero.
    """
    z = np.asarray(z, dtype=float)
    k = fit.k_final
    mu_t, gamma_t = refit(z, k, fit.edges_step2[0], fit.edges_step2[1])
    eta, xi22, psi = jump_stats(mu_t, gamma_t)
    if psi < ZERO_JUMP_THRESHOLD:
        raise ZeroJump(f"jump size {psi:.3e} below threshold")
    sigma1_sq, sigma2_sq = drift_estimates(eta, z, k, xi22)
    zs = zeta_series(z, k, mu_t, gamma_t, eta, xi22)
    s1_star, s2_star, bar1, bar2 = variance_estimates(zs)
    df, pvalue = fit_increment_law(zs, df_grid)
    return RegimeParams(
        xi22=xi22,
        psi=psi,
        sigma1_sq=sigma1_sq,
        sigma2_sq=sigma2_sq,
        sigma1_star_sq=s1_star,
        sigma2_star_sq=s2_star,
        bar_sigma1_sq=bar1,
        bar_sigma2_sq=bar2,
        df=df,
        ks_pvalue=pvalue,
    )
