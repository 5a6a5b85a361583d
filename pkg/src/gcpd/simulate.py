"""Synthetic piecewise-stationary Gaussian series.

Covariance constructions for the two segments (a sign-alternating Toeplitz
block matrix before the change and a banded matrix with linearly decaying
correlations after it) and the generator that stitches the two segments into
one time-ordered data matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UserInputError
from .numstats import Rng, cholesky, sample_mvn

__all__ = [
    "CovarianceSpec",
    "ScenarioConfig",
    "build_pre_covariance",
    "build_post_covariance",
    "build_covariance",
    "generate_series",
    "table_scenario",
]

KIND_TOEPLITZ = "ToeplitzBlockSign"
KIND_BANDED = "Banded"


@dataclass(frozen=True)
class CovarianceSpec:
    """Parameters of one segment covariance.

    ``s`` is the block width (ToeplitzBlockSign) or the number of bands
    (Banded); ``rho`` the base correlation.
    """

    p: int
    s: int
    rho: float
    kind: str

    def __post_init__(self):
        if self.kind not in (KIND_TOEPLITZ, KIND_BANDED):
            raise UserInputError(f"unknown covariance kind {self.kind!r}")
        if self.p < 2:
            raise UserInputError("dimension p must be >= 2")
        if not 1 <= self.s <= self.p:
            raise UserInputError("block/band width s must satisfy 1 <= s <= p")
        if self.kind == KIND_BANDED and self.s >= self.p:
            raise UserInputError("band width s must be < p")
        if not 0.0 <= self.rho < 1.0:
            raise UserInputError("rho must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"p": self.p, "s": self.s, "rho": self.rho, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceSpec":
        try:
            return cls(p=int(d["p"]), s=int(d["s"]), rho=float(d["rho"]), kind=str(d["kind"]))
        except KeyError as exc:
            raise UserInputError(f"covariance spec missing field {exc}") from exc


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario: sizes, true change fraction and covariances."""

    T: int
    p: int
    tau0: float
    sigma_spec: CovarianceSpec
    delta_spec: CovarianceSpec
    seed: int

    def __post_init__(self):
        if not 0.0 < self.tau0 < 1.0:
            raise UserInputError("tau0 must lie in (0, 1)")
        k0 = math.floor(self.T * self.tau0)
        if k0 < 2 or self.T - k0 < 2:
            raise UserInputError("both segments need at least 2 rows")
        if self.sigma_spec.p != self.p or self.delta_spec.p != self.p:
            raise UserInputError("covariance spec dimensions must equal p")

    @property
    def k0(self) -> int:
        """True change index on the integer time scale."""
        return math.floor(self.T * self.tau0)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "p": self.p,
            "tau0": self.tau0,
            "sigma_spec": self.sigma_spec.to_dict(),
            "delta_spec": self.delta_spec.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            return cls(
                T=int(d["T"]),
                p=int(d["p"]),
                tau0=float(d["tau0"]),
                sigma_spec=CovarianceSpec.from_dict(d["sigma_spec"]),
                delta_spec=CovarianceSpec.from_dict(d["delta_spec"]),
                seed=int(d["seed"]),
            )
        except KeyError as exc:
            raise UserInputError(f"scenario missing field {exc}") from exc


def build_pre_covariance(p: int, s: int, rho: float) -> np.ndarray:
    """Sign-alternating Toeplitz block covariance.

    Entry (l, m) inside an s-by-s diagonal block is
    ``(-1)^(l+m) * rho^(|l-m|^a)`` with ``a = 1 / log(s)`` (``a = 1`` when
    ``s == 1``); entries outside the block diagonal are zero. The diagonal is
    always +1 since ``(-1)^(2l) = 1``. The result is checked positive
    definite before being returned.
    """
    spec = CovarianceSpec(p=p, s=s, rho=rho, kind=KIND_TOEPLITZ)
    a = 1.0 if spec.s == 1 else 1.0 / math.log(spec.s)
    idx = np.arange(p)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    gamma = rho ** (dist**a)
    signs = np.zeros((p, p))
    for start in range(0, p, spec.s):
        stop = min(start + spec.s, p)
        local = np.arange(stop - start)
        signs[start:stop, start:stop] = (-1.0) ** (local[:, None] + local[None, :])
    sigma = signs * gamma
    cholesky(sigma)  # raises NotPositiveDefinite on an invalid combination
    return sigma


def build_post_covariance(p: int, s: int, rho2: float) -> np.ndarray:
    """Banded covariance with unit diagonal and linearly decaying bands.

    Band ``d`` (for d = 1..s) carries the value ``rho2 * (s - d + 1) / s``,
    so all ``s`` bands are nonzero and decrease toward zero. Checked positive
    definite before being returned.
    """
    spec = CovarianceSpec(p=p, s=s, rho=rho2, kind=KIND_BANDED)
    delta = np.eye(p)
    for d in range(1, spec.s + 1):
        value = rho2 * (spec.s - d + 1) / spec.s
        offs = np.arange(p - d)
        delta[offs, offs + d] = value
        delta[offs + d, offs] = value
    cholesky(delta)
    return delta


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    if spec.kind == KIND_TOEPLITZ:
        return build_pre_covariance(spec.p, spec.s, spec.rho)
    return build_post_covariance(spec.p, spec.s, spec.rho)


def generate_series(cfg: ScenarioConfig, rng: Rng | None = None) -> np.ndarray:
    """T-by-p data matrix with a covariance switch at ``floor(T * tau0)``.

    Rows 1..k0 are i.i.d. N(0, Sigma), the remaining rows i.i.d. N(0, Delta).
    Deterministic given ``cfg.seed``; pass ``rng`` to draw from an explicit
    stream instead (used by the replication harness).
    """
    sigma = build_covariance(cfg.sigma_spec)
    delta = build_covariance(cfg.delta_spec)
    chol_pre = cholesky(sigma)
    chol_post = cholesky(delta)
    base = rng if rng is not None else Rng(cfg.seed)
    k0 = cfg.k0
    pre = sample_mvn(chol_pre, k0, base.child(0))
    post = sample_mvn(chol_post, cfg.T - k0, base.child(1))
    return np.vstack([pre, post])


def table_scenario(T: int, p: int, tau0: float, seed: int) -> ScenarioConfig:
    """Benchmark scenario: 20% block width pre-change, 15% bands post-change
    (band count truncated, matching a decaying-to-zero band sequence), base
    correlations 0.4 and 0.5."""
    s_pre = max(2, round(0.2 * p))
    s_post = max(1, min(p - 1, math.floor(0.15 * p)))
    return ScenarioConfig(
        T=T,
        p=p,
        tau0=tau0,
        sigma_spec=CovarianceSpec(p=p, s=s_pre, rho=0.4, kind=KIND_TOEPLITZ),
        delta_spec=CovarianceSpec(p=p, s=s_post, rho=0.5, kind=KIND_BANDED),
        seed=seed,
    )
