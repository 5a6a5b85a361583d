"""Command line interface.

Subcommands: ``simulate``, ``estimate``, ``infer``, ``bench``, ``ingest``.
Every command is a pure function of its input files, flags and seed; output
files are byte-identical across reruns. Option values resolve in the order
command-line flag, ``--config`` JSON file, ``GCPD_SEED`` environment
variable (seeds only), built-in default. Exit codes: 0 success, 1 user
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .changepoint import ChangePointFit, algorithm1, algorithm2
from .errors import GcpdError, NumericalError, UserInputError
from .inference import (
    NonvanishingMcSettings,
    REGIME_NONVANISHING,
    REGIME_VANISHING,
    VanishingMcSettings,
    confidence_interval,
    estimate_regime_params,
)
from .ingest import IngestConfig, ingest
from .jsonio import read_csv, render_json, write_csv
from .lasso import LassoConfig, default_lambda_grid
from .numstats import Rng
from .simulate import ScenarioConfig, generate_series

__all__ = ["main"]

DEFAULT_ALPHAS = (0.1, 0.05, 0.01)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UserInputError(message)


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UserInputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UserInputError(f"{path}: invalid JSON: {exc}") from exc


def _load_data(path: str) -> np.ndarray:
    try:
        matrix, _ = read_csv(path)
    except (OSError, ValueError) as exc:
        raise UserInputError(f"cannot read data from {path}: {exc}") from exc
    return matrix


def _write_text(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


class _Options:
    """Flag / config-file / environment / default resolution."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_json(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=None):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            value = default
        if value is not None and cast is not None:
            try:
                return cast(value)
            except (TypeError, ValueError) as exc:
                raise UserInputError(f"invalid value for {key}: {value!r}") from exc
        return value

    def seed(self, default: int = 0) -> int:
        value = self.get("seed")
        if value is None:
            env = os.environ.get("GCPD_SEED")
            value = env if env is not None else default
        try:
            return int(value)
        except (TypeError, ValueError) as exc:
            raise UserInputError(f"invalid seed: {value!r}") from exc


def _parse_fractions(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise UserInputError(f"invalid fraction list: {text!r}") from exc


def _lasso_config(opts: _Options) -> LassoConfig:
    return LassoConfig(
        tol=opts.get("tol", 1e-7, float),
        max_iter=opts.get("max_iter", 10_000, int),
        lambda_grid=default_lambda_grid(opts.get("lambda_grid_size", 75, int)),
    )


def _maybe_center(z: np.ndarray, opts: _Options) -> np.ndarray:
    if opts.get("center", False, bool):
        return z - z.mean(axis=0)
    return z


def _cmd_simulate(args: argparse.Namespace) -> int:
    opts = _Options(args)
    scenario = ScenarioConfig.from_dict(_load_json(args.scenario))
    if opts.get("seed") is not None or os.environ.get("GCPD_SEED") is not None:
        scenario = ScenarioConfig.from_dict(
            {**scenario.to_dict(), "seed": opts.seed(scenario.seed)}
        )
    z = generate_series(scenario)
    columns = [f"x{j + 1}" for j in range(scenario.p)]
    if args.output is None:
        write_csv(z, columns, sys.stdout)
    else:
        write_csv(z, columns, args.output)
    return 0


def _step1_resolution(opts: _Options) -> float | None:
    value = opts.get("step1_resolution", 0.01, float)
    return None if value == 0.0 else value


def _cmd_estimate(args: argparse.Namespace) -> int:
    opts = _Options(args)
    z = _maybe_center(_load_data(args.data), opts)
    cfg = _lasso_config(opts)
    external_k = opts.get("external_k", None, int)
    if external_k is not None:
        fit = algorithm2(z, external_k, cfg)
    else:
        grid = _parse_fractions(opts.get("grid", "0.25,0.5,0.75"))
        fit = algorithm1(z, grid=grid, cfg=cfg,
                         step1_resolution=_step1_resolution(opts))
    payload = fit.to_dict()
    payload["seed"] = opts.seed()
    _write_text(render_json(payload), args.output)
    return 0


def _regimes(opts: _Options) -> tuple[str, ...]:
    regime = opts.get("regime", "both", str)
    if regime == "both":
        return (REGIME_VANISHING, REGIME_NONVANISHING)
    if regime in (REGIME_VANISHING, REGIME_NONVANISHING):
        return (regime,)
    raise UserInputError(f"unknown regime {regime!r}")


def _alphas(opts: _Options) -> tuple[float, ...]:
    raw = opts.get("alpha")
    if raw is None:
        return DEFAULT_ALPHAS
    values = tuple(float(a) for a in (raw if isinstance(raw, (list, tuple)) else [raw]))
    for a in values:
        if not 0.0 < a < 1.0:
            raise UserInputError(f"alpha {a} outside (0, 1)")
    return tuple(sorted(set(values), reverse=True))


def _cmd_infer(args: argparse.Namespace) -> int:
    opts = _Options(args)
    z = _maybe_center(_load_data(args.data), opts)
    fit = ChangePointFit.from_dict(_load_json(args.fit))
    if fit.T != z.shape[0]:
        raise UserInputError(
            f"fit was computed for T={fit.T} but data has {z.shape[0]} rows"
        )
    df_grid_max = opts.get("df_grid_max", 100, int)
    params = estimate_regime_params(z, fit, range(1, df_grid_max + 1))

    mc_v = VanishingMcSettings(
        n_paths=opts.get("mc_paths", 20_000, int),
        step=opts.get("mc_step", 0.01, float),
        horizon=opts.get("horizon", 50.0, float),
    )
    mc_nv = NonvanishingMcSettings(
        n_paths=opts.get("nv_paths", 3_000, int),
        horizon=opts.get("nv_horizon", 1_000, int),
    )
    rng = Rng(opts.seed())
    intervals = []
    for regime in _regimes(opts):
        # one stream per regime: quantiles at every level come from the same
        # simulated paths, so widths are monotone in the level by construction
        stream = rng.child(0 if regime == REGIME_VANISHING else 1)
        for alpha in _alphas(opts):
            ci = confidence_interval(
                fit, params, regime, alpha, fit.T,
                mc_vanishing=mc_v, mc_nonvanishing=mc_nv, rng=stream,
            )
            intervals.append(ci.to_dict())
    payload = {
        "params": params.to_dict(),
        "intervals": intervals,
        "seed": opts.seed(),
    }
    _write_text(render_json(payload), args.output)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    opts = _Options(args)
    scenario = ScenarioConfig.from_dict(_load_json(args.scenario))
    replications = opts.get("replications", None, int)
    if replications is None:
        raise UserInputError("--replications is required")
    alphas = _parse_fractions(opts.get("alphas", "0.1,0.05,0.01"))
    mc_v = bench_mod.BENCH_VANISHING_MC
    if opts.get("mc_paths") is not None or opts.get("mc_step") is not None \
            or opts.get("horizon") is not None:
        mc_v = VanishingMcSettings(
            n_paths=opts.get("mc_paths", mc_v.n_paths, int),
            step=opts.get("mc_step", mc_v.step, float),
            horizon=opts.get("horizon", mc_v.horizon, float),
        )
    mc_nv = bench_mod.BENCH_NONVANISHING_MC
    if opts.get("nv_paths") is not None or opts.get("nv_horizon") is not None:
        mc_nv = NonvanishingMcSettings(
            n_paths=opts.get("nv_paths", mc_nv.n_paths, int),
            horizon=opts.get("nv_horizon", mc_nv.horizon, int),
        )
    report = bench_mod.run_replications(
        scenario,
        replications,
        alphas,
        Rng(opts.seed()),
        lasso_cfg=_lasso_config(opts),
        grid=_parse_fractions(opts.get("grid", "0.25,0.5,0.75")),
        mc_vanishing=mc_v,
        mc_nonvanishing=mc_nv,
        df_grid_max=opts.get("df_grid_max", 100, int),
        step1_resolution=_step1_resolution(opts),
    )
    fmt = opts.get("format", "json", str)
    if fmt == "json":
        _write_text(render_json(report.to_dict()), args.output)
    else:
        _write_text(bench_mod.emit_table([report], fmt), args.output)
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    opts = _Options(args)
    cfg = IngestConfig(
        input=args.input,
        reference_column=opts.get("reference_column", None, str)
        or _missing("--reference-column"),
        sort_by=opts.get("sort_by", None, str) or _missing("--sort-by"),
        prevalence_threshold=opts.get("prevalence_threshold", 0.35, float),
        pseudocount=opts.get("pseudocount", 0.5, float),
    )
    result = ingest(cfg)
    meta = render_json(result.metadata(cfg))
    if args.output is None:
        write_csv(result.matrix, result.columns, sys.stdout)
        sys.stderr.write(meta)
    else:
        write_csv(result.matrix, result.columns, args.output)
        sys.stdout.write(meta)
    return 0


def _missing(flag: str):
    raise UserInputError(f"{flag} is required")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with default option values")
    sub.add_argument("--seed", type=int, help="random seed (env GCPD_SEED as fallback)")
    sub.add_argument("-o", "--output", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcpd", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("simulate", parents=[], help="scenario JSON in, data CSV out")
    p.add_argument("--scenario", required=True, help="ScenarioConfig JSON file")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = commands.add_parser("estimate", help="data CSV in, change point fit JSON out")
    p.add_argument("--data", required=True, help="data CSV (header row, numeric)")
    p.add_argument("--grid", help="comma-separated initializer fractions")
    p.add_argument("--lambda-grid-size", dest="lambda_grid_size", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--external-k", dest="external_k", type=int,
                   help="skip initialization; run the final stage from this split")
    p.add_argument("--step1-resolution", dest="step1_resolution", type=float,
                   help="fraction-grid spacing of the first-pass scan (0 scans every split)")
    p.add_argument("--center", action="store_const", const=True,
                   help="mean-center columns before estimation")
    _add_common(p)
    p.set_defaults(func=_cmd_estimate)

    p = commands.add_parser("infer", help="data + fit in, params and intervals out")
    p.add_argument("--data", required=True)
    p.add_argument("--fit", required=True, help="fit JSON from 'estimate'")
    p.add_argument("--alpha", action="append", type=float,
                   help="significance level (repeatable)")
    p.add_argument("--regime", choices=[REGIME_VANISHING, REGIME_NONVANISHING, "both"])
    p.add_argument("--mc-paths", dest="mc_paths", type=int)
    p.add_argument("--mc-step", dest="mc_step", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--nv-paths", dest="nv_paths", type=int)
    p.add_argument("--nv-horizon", dest="nv_horizon", type=int)
    p.add_argument("--df-grid-max", dest="df_grid_max", type=int)
    p.add_argument("--center", action="store_const", const=True)
    _add_common(p)
    p.set_defaults(func=_cmd_infer)

    p = commands.add_parser("bench", help="replication harness")
    p.add_argument("--scenario", required=True)
    p.add_argument("--replications", type=int)
    p.add_argument("--alphas", help="comma-separated significance levels")
    p.add_argument("--format", choices=["csv", "markdown", "json"])
    p.add_argument("--grid", help="comma-separated initializer fractions")
    p.add_argument("--step1-resolution", dest="step1_resolution", type=float)
    p.add_argument("--lambda-grid-size", dest="lambda_grid_size", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--mc-paths", dest="mc_paths", type=int)
    p.add_argument("--mc-step", dest="mc_step", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--nv-paths", dest="nv_paths", type=int)
    p.add_argument("--nv-horizon", dest="nv_horizon", type=int)
    p.add_argument("--df-grid-max", dest="df_grid_max", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_bench)

    p = commands.add_parser("ingest", help="count table in, log-ratio CSV out")
    p.add_argument("--input", required=True, help="delimited count table")
    p.add_argument("--reference-column", dest="reference_column")
    p.add_argument("--sort-by", dest="sort_by")
    p.add_argument("--prevalence-threshold", dest="prevalence_threshold", type=float)
    p.add_argument("--pseudocount", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_ingest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UserInputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return 2
    except GcpdError as exc:  # pragma: no cover - safety net
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
