"""Replication harness: bias, rmse, coverage and average margin of error.

Each replicate draws a fresh series from its own derived random stream, runs
the full estimator, refits, estimates the regime parameters and builds
intervals under both regimes for every requested significance level.
Replicates whose inference step fails (zero jump, horizon escape) are
excluded from coverage and reported as failures; the point-estimate metrics
always use all replicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .changepoint import algorithm1
from .errors import NumericalError, UserInputError
from .inference import (
    NonvanishingMcSettings,
    REGIME_NONVANISHING,
    REGIME_VANISHING,
    VanishingMcSettings,
    empirical_upper_quantile,
    estimate_regime_params,
    nonvanishing_argmax_samples,
    vanishing_argmax_samples,
)
from .lasso import LassoConfig
from .numstats import Rng
from .simulate import ScenarioConfig, generate_series

__all__ = [
    "BenchmarkReport",
    "BENCH_VANISHING_MC",
    "BENCH_NONVANISHING_MC",
    "run_replications",
    "emit_table",
]

# Desk-scale Monte Carlo settings for the per-replicate quantiles. Smaller
# than the standalone inference defaults; quantile noise at these sizes is
# well inside the coverage tolerances while keeping a 200-replicate run on a
# laptop budget. Fully overridable by the caller / CLI.
BENCH_VANISHING_MC = VanishingMcSettings(n_paths=4_000, step=0.02, horizon=50.0)
BENCH_NONVANISHING_MC = NonvanishingMcSettings(n_paths=3_000, horizon=200)


@dataclass
class BenchmarkReport:
    """Aggregated replication metrics for one scenario."""

    scenario: ScenarioConfig
    replications: int
    bias: float
    rmse: float
    results: dict  # regime -> {alpha: {"coverage": float, "avg_me": float}}
    failures: int = 0
    failure_reasons: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "replications": self.replications,
            "bias": self.bias,
            "rmse": self.rmse,
            "results": {
                regime: {
                    _alpha_key(alpha): {
                        "coverage": cell["coverage"],
                        "avg_me": cell["avg_me"],
                    }
                    for alpha, cell in sorted(per_alpha.items(), reverse=True)
                }
                for regime, per_alpha in self.results.items()
            },
            "failures": {
                "count": self.failures,
                "reasons": list(self.failure_reasons),
            },
        }


def _alpha_key(alpha: float) -> str:
    return format(alpha, "g")


def run_replications(scenario: ScenarioConfig, R: int, alphas, master_rng: Rng,
                     lasso_cfg: LassoConfig | None = None,
                     grid=(0.25, 0.5, 0.75),
                     mc_vanishing: VanishingMcSettings | None = None,
                     mc_nonvanishing: NonvanishingMcSettings | None = None,
                     df_grid_max: int = 100,
                     step1_resolution: float | None = 0.01) -> BenchmarkReport:
    """Run ``R`` replicates of simulate / estimate / infer and aggregate.

    bias = |mean(k_hat - k0)| and rmse = sqrt(mean((k_hat - k0)^2)) over all
    replicates; coverage and average margin are per (regime, alpha) over the
    replicates whose inference succeeded.
    """
    if R < 1:
        raise UserInputError("need at least one replication")
    alphas = sorted(set(float(a) for a in alphas))
    if not alphas:
        raise UserInputError("need at least one significance level")
    mc_v = mc_vanishing or BENCH_VANISHING_MC
    mc_nv = mc_nonvanishing or BENCH_NONVANISHING_MC
    lasso_cfg = lasso_cfg or LassoConfig()
    df_grid = range(1, df_grid_max + 1)

    k0 = scenario.k0
    errors = np.empty(R)
    covered = {
        (regime, alpha): []
        for regime in (REGIME_VANISHING, REGIME_NONVANISHING)
        for alpha in alphas
    }
    margins = {key: [] for key in covered}
    failures: list[str] = []

    for r in range(R):
        rep_rng = master_rng.child(r)
        z = generate_series(scenario, rng=rep_rng.child(0))
        fit = algorithm1(z, grid=grid, cfg=lasso_cfg, step1_resolution=step1_resolution)
        errors[r] = fit.k_final - k0
        try:
            params = estimate_regime_params(z, fit, df_grid)
            v_samples = vanishing_argmax_samples(
                math.sqrt(params.sigma1_star_sq),
                math.sqrt(params.sigma2_star_sq),
                params.sigma1_sq,
                params.sigma2_sq,
                mc_v,
                rep_rng.child(1),
            )
            nv_samples = nonvanishing_argmax_samples(
                params.psi, params.sigma1_sq, params.sigma2_sq,
                params.bar_sigma1_sq, params.bar_sigma2_sq, params.df,
                mc_nv, rep_rng.child(2),
            )
        except NumericalError as exc:
            failures.append(f"replicate {r}: {type(exc).__name__}: {exc}")
            continue
        abs_v = np.abs(v_samples)
        abs_nv = np.abs(nv_samples)
        scale_v = params.sigma1_star_sq / (params.sigma1_sq**2 * params.psi**2)
        for alpha in alphas:
            me_v = empirical_upper_quantile(abs_v, 1.0 - alpha) * scale_v
            me_nv = float(int(empirical_upper_quantile(abs_nv, 1.0 - alpha)))
            covered[(REGIME_VANISHING, alpha)].append(
                fit.k_final - me_v <= k0 <= fit.k_final + me_v
            )
            margins[(REGIME_VANISHING, alpha)].append(me_v)
            covered[(REGIME_NONVANISHING, alpha)].append(
                fit.k_final - me_nv <= k0 <= fit.k_final + me_nv
            )
            margins[(REGIME_NONVANISHING, alpha)].append(me_nv)

    results = {REGIME_NONVANISHING: {}, REGIME_VANISHING: {}}
    for (regime, alpha), flags in covered.items():
        cell = {
            "coverage": float(np.mean(flags)) if flags else float("nan"),
            "avg_me": float(np.mean(margins[(regime, alpha)])) if flags else float("nan"),
        }
        results[regime][alpha] = cell

    mean_err = float(errors.mean())
    return BenchmarkReport(
        scenario=scenario,
        replications=R,
        bias=abs(mean_err),
        rmse=float(np.sqrt((errors**2).mean())),
        results=results,
        failures=len(failures),
        failure_reasons=failures,
    )


def _format_cell(coverage: float, avg_me: float) -> str:
    return f"{coverage:.2f} ({avg_me:.3f})"


def _table_rows(reports) -> tuple[list[str], list[list[str]]]:
    reports = list(reports)
    if not reports:
        raise UserInputError("need at least one report")
    alphas = sorted({a for rep in reports for a in rep.results[REGIME_NONVANISHING]},
                    reverse=True)
    header = ["T", "p", "bias (rmse)"]
    for regime in (REGIME_NONVANISHING, REGIME_VANISHING):
        for alpha in alphas:
            header.append(f"{regime} a={_alpha_key(alpha)}")
    rows = []
    for rep in reports:
        row = [
            str(rep.scenario.T),
            str(rep.scenario.p),
            f"{rep.bias:.3f} ({rep.rmse:.3f})",
        ]
        for regime in (REGIME_NONVANISHING, REGIME_VANISHING):
            for alpha in alphas:
                cell = rep.results[regime][alpha]
                row.append(_format_cell(cell["coverage"], cell["avg_me"]))
        rows.append(row)
    return header, rows


def emit_table(reports, format: str = "markdown") -> str:
    """Render reports as csv, markdown or json text."""
    if format == "json":
        from .jsonio import render_json

        return render_json([rep.to_dict() for rep in reports])
    header, rows = _table_rows(reports)
    if format == "csv":
        import csv
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join("---" for _ in header) + " |",
        ]
        for row in rows:
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    raise UserInputError(f"unknown table format {format!r}")
