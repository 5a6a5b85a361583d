"""Split-point estimation by two-segment squared prediction loss.

The loss of a candidate split charges every row its squared prediction error
under the pre-split coefficient family before the split and under the
post-split family after it. Because the families are fixed during a scan,
each row's two costs are computed once and prefix sums yield the whole loss
profile in a single pass. The full estimator runs the scan twice, refreshing
the lasso fits in between (coarse grid initializer, near-optimal first pass,
final pass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UserInputError
from .lasso import BicResult, EdgeEstimates, LassoConfig, bic_select

__all__ = [
    "ChangePointFit",
    "fraction_for_index",
    "row_costs",
    "q_loss",
    "u_criterion",
    "scan_argmin",
    "initialize",
    "algorithm1",
    "algorithm2",
    "point_fit",
]

DEFAULT_GRID = (0.25, 0.5, 0.75)
# Aggregate jump norms below this are flagged as low signal.
LOW_SIGNAL_THRESHOLD = 1e-8


def fraction_for_index(k: int, T: int) -> float:
    """Smallest-error fraction t with floor(T * t) == k."""
    t = k / T
    while math.floor(T * t) < k:
        t = math.nextafter(t, 1.0)
    while math.floor(T * t) > k:
        t = math.nextafter(t, 0.0)
    return t


@dataclass
class ChangePointFit:
    """Three-stage split estimate with per-stage edge fits.

    ``q_profile`` holds the loss at every candidate split of the final scan
    (index i corresponds to split i+1). ``clamped_stages`` names any stage
    whose raw scan output had to be pulled back into [2, T-2] so both
    segments keep at least two rows.
    """

    T: int
    tau_init: float
    tau_step1: float
    tau_final: float
    k_init: int
    k_step1: int
    k_final: int
    edges_step1: tuple[EdgeEstimates, EdgeEstimates] | None
    edges_step2: tuple[EdgeEstimates, EdgeEstimates]
    q_profile: np.ndarray
    clamped_stages: tuple[str, ...] = ()
    low_signal: bool = False

    def __post_init__(self):
        for name, tau, k in (
            ("init", self.tau_init, self.k_init),
            ("step1", self.tau_step1, self.k_step1),
            ("final", self.tau_final, self.k_final),
        ):
            if not 1 <= k <= self.T - 1:
                raise ValueError(f"{name} split {k} outside 1..T-1")
            if math.floor(self.T * tau) != k:
                raise ValueError(f"{name}: floor(T*tau) != k")

    def to_dict(self) -> dict:
        d = {
            "T": self.T,
            "tau_init": self.tau_init,
            "tau_step1": self.tau_step1,
            "tau_final": self.tau_final,
            "k_init": self.k_init,
            "k_step1": self.k_step1,
            "k_final": self.k_final,
            "lambda_step1": None if self.edges_step1 is None
            else self.edges_step1[0].lambda_used,
            "lambda_step2": self.edges_step2[0].lambda_used,
            "low_signal": self.low_signal,
            "clamped_stages": list(self.clamped_stages),
            "q_profile": [float(v) for v in self.q_profile],
            "edges_step1": None,
            "edges_step2": {
                "mu": self.edges_step2[0].to_dict(),
                "gamma": self.edges_step2[1].to_dict(),
            },
        }
        if self.edges_step1 is not None:
            d["edges_step1"] = {
                "mu": self.edges_step1[0].to_dict(),
                "gamma": self.edges_step1[1].to_dict(),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChangePointFit":
        step1 = d.get("edges_step1")
        edges1 = None
        if step1 is not None:
            edges1 = (EdgeEstimates.from_dict(step1["mu"]), EdgeEstimates.from_dict(step1["gamma"]))
        edges2 = (
            EdgeEstimates.from_dict(d["edges_step2"]["mu"]),
            EdgeEstimates.from_dict(d["edges_step2"]["gamma"]),
        )
        return cls(
            T=int(d["T"]),
            tau_init=float(d["tau_init"]),
            tau_step1=float(d["tau_step1"]),
            tau_final=float(d["tau_final"]),
            k_init=int(d["k_init"]),
            k_step1=int(d["k_step1"]),
            k_final=int(d["k_final"]),
            edges_step1=edges1,
            edges_step2=edges2,
            q_profile=np.asarray(d["q_profile"], dtype=float),
            clamped_stages=tuple(d.get("clamped_stages", ())),
            low_signal=bool(d.get("low_signal", False)),
        )


def row_costs(z: np.ndarray, edges: EdgeEstimates) -> np.ndarray:
    """Per-row squared prediction error under one coefficient family."""
    resid = z - z @ edges.matrix
    return np.einsum("ij,ij->i", resid, resid)


def q_loss(z, k: int, mu: EdgeEstimates, gamma: EdgeEstimates) -> float:
    """Two-segment squared loss at split ``k`` (k = 0 or T leaves one segment empty)."""
    z = np.asarray(z, dtype=float)
    T = z.shape[0]
    if not 0 <= k <= T:
        raise ValueError(f"split {k} outside 0..T")
    if mu.p != z.shape[1] or gamma.p != z.shape[1]:
        raise ValueError("edge estimate dimension does not match data")
    a = row_costs(z, mu)
    b = row_costs(z, gamma)
    return float(a[:k].sum() + b[k:].sum()) / T


def u_criterion(z, k: int, k0: int, mu: EdgeEstimates, gamma: EdgeEstimates) -> float:
    """Loss at ``k`` relative to the loss at a reference split ``k0``."""
    return q_loss(z, k, mu, gamma) - q_loss(z, k0, mu, gamma)


def _scan(z: np.ndarray, mu: EdgeEstimates, gamma: EdgeEstimates) -> tuple[int, np.ndarray]:
    T = z.shape[0]
    a = row_costs(z, mu)
    b = row_costs(z, gamma)
    # Profile as cumsum(a - b) + total(b): when the two families coincide the
    # difference is exactly zero, so ties resolve to the smallest index.
    diff = np.cumsum(a - b)
    profile = (diff[: T - 1] + b.sum()) / T
    return int(np.argmin(profile)) + 1, profile


def _coarse_candidates(T: int, step: float) -> np.ndarray:
    ks = {math.floor(T * m * step) for m in range(1, int(round(1.0 / step)))}
    ks &= set(range(1, T))
    return np.asarray(sorted(ks), dtype=int)


def _scan_coarse(profile: np.ndarray, T: int, step: float) -> int:
    candidates = _coarse_candidates(T, step)
    if candidates.size == 0:
        return int(np.argmin(profile)) + 1
    return int(candidates[np.argmin(profile[candidates - 1])])


def scan_argmin(z, mu: EdgeEstimates, gamma: EdgeEstimates) -> int:
    """Loss-minimizing split over k = 1..T-1; ties go to the smallest k."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] < 2:
        raise UserInputError("scan requires at least 2 rows")
    k, _ = _scan(z, mu, gamma)
    return k


def _validate_grid(grid: Sequence[float], T: int) -> tuple[float, ...]:
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise UserInputError("initializer grid must be nonempty")
    for g in grid:
        k = math.floor(T * g)
        if k < 2 or T - k < 2:
            raise UserInputError(f"grid fraction {g} gives an invalid split for T={T}")
    return grid


def _initialize(z: np.ndarray, grid: Sequence[float], cfg: LassoConfig) -> tuple[float, int, BicResult]:
    T = z.shape[0]
    grid = _validate_grid(grid, T)
    best = None  # (loss, tau, k, selection)
    for tau in grid:
        k = math.floor(T * tau)
        sel = bic_select(z, tau, cfg)
        loss = q_loss(z, k, sel.mu, sel.gamma)
        if best is None or loss < best[0]:
            best = (loss, tau, k, sel)
    _, tau, k, sel = best
    return tau, k, sel


def initialize(z, grid: Sequence[float] = DEFAULT_GRID,
               cfg: LassoConfig | None = None) -> float:
    """Coarse-grid initializer: the candidate whose own-split loss is smallest.

    Each candidate is scored with its BIC-tuned neighborhood fits; ties go to
    the smallest fraction.
    """
    z = np.asarray(z, dtype=float)
    tau, _, _ = _initialize(z, grid, cfg or LassoConfig())
    return tau


def _clamp_split(k: int, T: int) -> tuple[int, bool]:
    clamped = min(max(k, 2), T - 2)
    return clamped, clamped != k


def _aggregate_jump_norm(mu: EdgeEstimates, gamma: EdgeEstimates) -> float:
    diff = mu.matrix - gamma.matrix
    return math.sqrt(float((diff**2).sum()) / mu.p)


def algorithm1(z, grid: Sequence[float] = DEFAULT_GRID,
               cfg: LassoConfig | None = None,
               step1_resolution: float | None = 0.01) -> ChangePointFit:
    """Twice-iterated estimator: initialize, refit + scan, refit + scan again.

    Stage 1 reuses the initializer's BIC-tuned fits (they are computed at the
    selected fraction already) and scans coarse-to-fine: its pass is
    restricted to the fraction grid with spacing ``step1_resolution``
    (``None`` scans every split), which keeps the first pass from latching
    onto rows its contaminated fits have memorized; the final pass always
    scans every split. Raw scan outputs are clamped into [2, T-2] so every
    later regression keeps two rows per segment; clamps are recorded.
    """
    cfg = cfg or LassoConfig()
    z = np.asarray(z, dtype=float)
    T = z.shape[0]
    if T < 8:
        raise UserInputError("need at least 8 rows")
    if step1_resolution is not None and not 0.0 < step1_resolution < 1.0:
        raise UserInputError("step1_resolution must lie in (0, 1) or be None")

    tau_check, k_check, sel1 = _initialize(z, grid, cfg)

    clamps = []
    k_hat_raw, profile1 = _scan(z, sel1.mu, sel1.gamma)
    if step1_resolution is not None:
        k_hat_raw = _scan_coarse(profile1, T, step1_resolution)
    k_hat, was_clamped = _clamp_split(k_hat_raw, T)
    if was_clamped:
        clamps.append("step1")
    tau_hat = fraction_for_index(k_hat, T)

    sel2 = bic_select(z, tau_hat, cfg)
    k_tilde_raw, profile = _scan(z, sel2.mu, sel2.gamma)
    k_tilde, was_clamped = _clamp_split(k_tilde_raw, T)
    if was_clamped:
        clamps.append("final")
    tau_tilde = fraction_for_index(k_tilde, T)

    return ChangePointFit(
        T=T,
        tau_init=tau_check,
        tau_step1=tau_hat,
        tau_final=tau_tilde,
        k_init=k_check,
        k_step1=k_hat,
        k_final=k_tilde,
        edges_step1=(sel1.mu, sel1.gamma),
        edges_step2=(sel2.mu, sel2.gamma),
        q_profile=profile,
        clamped_stages=tuple(clamps),
        low_signal=_aggregate_jump_norm(sel2.mu, sel2.gamma) < LOW_SIGNAL_THRESHOLD,
    )


def algorithm2(z, external_k: int, cfg: LassoConfig | None = None) -> ChangePointFit:
    """Final-stage update seeded by an externally supplied split index.

    Skips the initializer and first pass entirely; runs the last stage
    exactly as :func:`algorithm1` does from ``external_k / T``.
    """
    cfg = cfg or LassoConfig()
    z = np.asarray(z, dtype=float)
    T = z.shape[0]
    if T < 8:
        raise UserInputError("need at least 8 rows")
    external_k = int(external_k)
    if not 2 <= external_k <= T - 2:
        raise UserInputError(f"external split {external_k} outside 2..T-2")
    tau_hat = fraction_for_index(external_k, T)

    sel2 = bic_select(z, tau_hat, cfg)
    k_tilde_raw, profile = _scan(z, sel2.mu, sel2.gamma)
    k_tilde, was_clamped = _clamp_split(k_tilde_raw, T)
    clamps = ("final",) if was_clamped else ()
    tau_tilde = fraction_for_index(k_tilde, T)

    return ChangePointFit(
        T=T,
        tau_init=tau_hat,
        tau_step1=tau_hat,
        tau_final=tau_tilde,
        k_init=external_k,
        k_step1=external_k,
        k_final=k_tilde,
        edges_step1=None,
        edges_step2=(sel2.mu, sel2.gamma),
        q_profile=profile,
        clamped_stages=clamps,
        low_signal=_aggregate_jump_norm(sel2.mu, sel2.gamma) < LOW_SIGNAL_THRESHOLD,
    )


def point_fit(k: int, T: int, edges: tuple[EdgeEstimates, EdgeEstimates],
              q_profile: np.ndarray | None = None) -> ChangePointFit:
    """Wrap an already-known split index as a ChangePointFit (no staging)."""
    tau = fraction_for_index(int(k), int(T))
    profile = np.zeros(T - 1) if q_profile is None else np.asarray(q_profile, float)
    return ChangePointFit(
        T=int(T),
        tau_init=tau,
        tau_step1=tau,
        tau_final=tau,
        k_init=int(k),
        k_step1=int(k),
        k_final=int(k),
        edges_step1=None,
        edges_step2=edges,
        q_profile=profile,
    )
