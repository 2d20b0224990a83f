"""Command-line front end: simulate, detect, ccf, backtest and rank.

Every run echoes its resolved configuration as JSON to stdout and writes it
next to the outputs, so results stay reproducible. Exit codes: 0 success,
2 usage errors, 3 invalid parameters or panel contents, 4 unreadable or
malformed data files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .backtest import (
    StrategyConfig,
    performance_report,
    run_strategy,
    sweep_strategies,
    write_pnl_csv,
    write_report_json,
)
from .core import DataError, TimeSeriesPanel
from .detection import (
    DetectConfig,
    METHODS,
    ccf_lead_lag_matrix,
    detect_pipeline,
    rowsum_rank,
    write_matrix_csv,
    write_multisets_csv,
)
from .experiments import MSE_SCOPES, derived_seed, recovery_cell, recovery_sweep
from .ingest import load_csv, preprocess_equity, preprocess_futures, to_panel
from .simulate import ground_truth, preset_design

STRATEGY_CHOICES = ("CCF",) + METHODS


def _comma_list(cast):
    def parse(text: str):
        try:
            return [cast(part) for part in text.split(",") if part != ""]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from exc

    return parse


def _write_config(config: dict, out_dir: str) -> None:
    text = json.dumps(config, indent=2, sort_keys=True)
    print(text)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        fh.write(text + "\n")


def _write_rows_csv(rows: list[dict], fields: list[str], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: (repr(v) if isinstance(v, float) else v)
                    for k, v in row.items()
                    if k in fields
                }
            )


def _load_panel(args) -> TimeSeriesPanel:
    raw = load_csv(args.input, layout=args.layout)
    if args.preprocess == "none":
        return to_panel(raw)
    if not args.market_id:
        raise ValueError("--market-id is required when preprocessing is enabled")
    if args.preprocess == "equity":
        result = preprocess_equity(raw, args.market_id)
    else:
        result = preprocess_futures(raw, args.market_id)
    sidecar = {
        "dropped_days": result.dropped_days,
        "dropped_assets": result.dropped_assets,
    }
    with open(os.path.join(args.out_dir, "dropped.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result.panel


def _add_io_options(parser) -> None:
    parser.add_argument("--input", required=True, help="panel CSV file")
    parser.add_argument("--layout", choices=("wide", "long"), default="wide")
    parser.add_argument(
        "--preprocess",
        choices=("none", "equity", "futures"),
        default="none",
        help="clean the table before use (requires --market-id)",
    )
    parser.add_argument("--market-id", default=None, help="market series id for preprocessing")


def _add_common(parser) -> None:
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--seed", type=int, default=0)


def _cmd_simulate(args) -> None:
    config = {
        "command": "simulate",
        "k": args.k,
        "n": args.n,
        "t_len": args.t_len,
        "q": args.q,
        "s": args.s,
        "n_clusters": args.n_clusters,
        "sigma": args.sigma,
        "theta": args.theta,
        "method": args.method,
        "repetitions": args.reps,
        "mse_scope": args.mse_scope,
        "seed": args.seed,
        "jobs": args.jobs,
        "out_dir": args.out_dir,
    }
    _write_config(config, args.out_dir)
    rows = recovery_sweep(
        ks=args.k,
        n=args.n,
        t_len=args.t_len,
        q=args.q,
        s=args.s,
        sigmas=args.sigma,
        thetas=args.theta,
        methods=args.method,
        repetitions=args.reps,
        seed=args.seed,
        n_clusters=args.n_clusters,
        mse_scope=args.mse_scope,
        jobs=args.jobs,
    )
    fields = ["setting", "sigma", "theta", "method", "repetition", "mse", "ari"]
    _write_rows_csv(rows, fields, os.path.join(args.out_dir, "sweep.csv"))
    single_cell = (
        len(args.k) == 1
        and len(args.sigma) == 1
        and len(args.theta) == 1
        and len(args.method) == 1
        and args.reps == 1
    )
    if single_cell:
        k = args.k[0]
        cells = args.n_clusters if args.n_clusters is not None else 11 * k
        detail = recovery_cell(
            k=k,
            n=args.n,
            t_len=args.t_len,
            q=args.q,
            s=args.s,
            n_clusters=cells,
            sigma=args.sigma[0],
            methods=args.method,
            thetas=args.theta,
            seed=derived_seed(args.seed, 0, 0, 0),
            mse_scope=args.mse_scope,
            keep_artifacts=True,
        )[0]
        design = preset_design(k, args.n)
        ids = detail["gamma"].ids
        write_matrix_csv(detail["gamma"], ids, os.path.join(args.out_dir, "gamma.csv"))
        write_matrix_csv(
            detail["error"].astype(np.int64)
            if float(np.abs(detail["error"] % 1).max(initial=0.0)) == 0.0
            else detail["error"],
            ids,
            os.path.join(args.out_dir, "error_matrix.csv"),
        )
        write_matrix_csv(
            ground_truth(design).psi, ids, os.path.join(args.out_dir, "psi.csv")
        )


def _detect_config_from(args, seed: int) -> DetectConfig:
    return DetectConfig(
        q=args.q,
        method=args.method,
        s=args.s,
        n_clusters=args.n_clusters,
        theta=args.theta,
        seed=seed,
        k_nn=args.k_nn,
        sigma_kernel=args.sigma_kernel,
        standardize=args.standardize,
        restarts=args.restarts,
    )


def _cmd_detect(args) -> None:
    config = {
        "command": "detect",
        "input": args.input,
        "layout": args.layout,
        "preprocess": args.preprocess,
        "market_id": args.market_id,
        "method": args.method,
        "q": args.q,
        "s": args.s,
        "n_clusters": args.n_clusters,
        "theta": args.theta,
        "k_nn": args.k_nn,
        "sigma_kernel": args.sigma_kernel,
        "standardize": args.standardize,
        "restarts": args.restarts,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    _write_config(config, args.out_dir)
    panel = _load_panel(args)
    result = detect_pipeline(panel, _detect_config_from(args, args.seed))
    write_matrix_csv(result.gamma, panel.ids, os.path.join(args.out_dir, "gamma.csv"))
    write_matrix_csv(result.votes.counts, panel.ids, os.path.join(args.out_dir, "votes.csv"))
    write_multisets_csv(
        result.multisets, panel.ids, os.path.join(args.out_dir, "multisets.csv")
    )


def _cmd_ccf(args) -> None:
    config = {
        "command": "ccf",
        "input": args.input,
        "layout": args.layout,
        "preprocess": args.preprocess,
        "market_id": args.market_id,
        "max_lag": args.max_lag,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    _write_config(config, args.out_dir)
    panel = _load_panel(args)
    gamma = ccf_lead_lag_matrix(panel, args.max_lag)
    write_matrix_csv(gamma, panel.ids, os.path.join(args.out_dir, "gamma_ccf.csv"))


def _strategy_config_from(args, method, lookback, horizon, fraction) -> StrategyConfig:
    return StrategyConfig(
        method=method,
        window_length=args.window_length,
        q=args.q,
        s=args.s,
        n_clusters=args.n_clusters,
        theta=args.theta,
        leader_fraction=fraction,
        lookback=lookback,
        horizon=horizon,
        seed=args.seed,
        target_vol=args.target_vol,
        k_nn=args.k_nn,
        sigma_kernel=args.sigma_kernel,
        standardize=args.standardize,
        restarts=args.restarts,
        ccf_max_lag=args.ccf_max_lag,
    )


def _cmd_backtest(args) -> None:
    config = {
        "command": "backtest",
        "input": args.input,
        "layout": args.layout,
        "preprocess": args.preprocess,
        "market_id": args.market_id,
        "method": args.method,
        "window_length": args.window_length,
        "q": args.q,
        "s": args.s,
        "n_clusters": args.n_clusters,
        "theta": args.theta,
        "leader_fraction": args.leader_fraction,
        "lookback": args.lookback,
        "horizon": args.horizon,
        "target_vol": args.target_vol,
        "k_nn": args.k_nn,
        "sigma_kernel": args.sigma_kernel,
        "standardize": args.standardize,
        "restarts": args.restarts,
        "ccf_max_lag": args.ccf_max_lag,
        "grid": args.grid,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    _write_config(config, args.out_dir)
    panel = _load_panel(args)
    if args.grid:
        base = _strategy_config_from(
            args,
            args.method[0],
            args.lookback[0],
            args.horizon[0],
            args.leader_fraction[0],
        )
        rows = sweep_strategies(
            panel,
            base,
            lookbacks=args.lookback,
            horizons=args.horizon,
            fractions=args.leader_fraction,
            methods=args.method,
        )
        fields = list(rows[0].keys())
        _write_rows_csv(rows, fields, os.path.join(args.out_dir, "backtest_grid.csv"))
        return
    if len(args.method) != 1 or len(args.lookback) != 1 or len(args.horizon) != 1 \
            or len(args.leader_fraction) != 1:
        raise ValueError("pass --grid to sweep comma-separated parameter lists")
    cfg = _strategy_config_from(
        args, args.method[0], args.lookback[0], args.horizon[0], args.leader_fraction[0]
    )
    laggers, leaders = run_strategy(panel, cfg)
    write_pnl_csv(laggers, os.path.join(args.out_dir, "pnl_laggers.csv"))
    write_pnl_csv(leaders, os.path.join(args.out_dir, "pnl_leaders.csv"))
    write_report_json(
        performance_report(laggers), config, os.path.join(args.out_dir, "report_laggers.json")
    )
    write_report_json(
        performance_report(leaders), config, os.path.join(args.out_dir, "report_leaders.json")
    )


def _cmd_rank(args) -> None:
    config = {
        "command": "rank",
        "input": args.input,
        "layout": args.layout,
        "preprocess": args.preprocess,
        "market_id": args.market_id,
        "method": args.method,
        "q": args.q,
        "s": args.s,
        "n_clusters": args.n_clusters,
        "theta": args.theta,
        "k_nn": args.k_nn,
        "sigma_kernel": args.sigma_kernel,
        "standardize": args.standardize,
        "restarts": args.restarts,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    _write_config(config, args.out_dir)
    panel = _load_panel(args)
    result = detect_pipeline(panel, _detect_config_from(args, args.seed))
    ranking = rowsum_rank(result.gamma)
    with open(os.path.join(args.out_dir, "ranking.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "id", "score"])
        for sid, score, rank in ranking:
            writer.writerow([rank, sid, repr(float(score))])


def _add_detect_options(parser, q_required: bool) -> None:
    parser.add_argument("--method", choices=METHODS, default="KM_Mod")
    if q_required:
        parser.add_argument("--q", type=int, required=True, help="window length")
    else:
        parser.add_argument("--q", type=int, default=10, help="window length")
    parser.add_argument("--s", type=int, default=1, help="window shift")
    parser.add_argument("--n-clusters", type=int, default=11)
    parser.add_argument("--theta", type=int, default=6, help="voting threshold")
    parser.add_argument("--k-nn", type=int, default=None)
    parser.add_argument("--sigma-kernel", type=float, default=None)
    parser.add_argument("--standardize", action="store_true")
    parser.add_argument("--restarts", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leadlag",
        description="Detect lead-lag structure by clustering sliding windows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthetic recovery sweep")
    _add_common(p_sim)
    p_sim.add_argument("--k", type=_comma_list(int), default=[1], help="factor counts")
    p_sim.add_argument("--n", type=int, default=6, help="number of series")
    p_sim.add_argument("--t-len", type=int, default=100, help="series length")
    p_sim.add_argument("--q", type=int, default=90)
    p_sim.add_argument("--s", type=int, default=1)
    p_sim.add_argument("--n-clusters", type=int, default=None, help="default 11 * k")
    p_sim.add_argument("--sigma", type=_comma_list(float), default=[1.0])
    p_sim.add_argument("--theta", type=_comma_list(int), default=[6])
    p_sim.add_argument("--method", type=_comma_list(str), default=["KM_Mod"])
    p_sim.add_argument("--reps", type=int, default=1)
    p_sim.add_argument(
        "--mse-scope",
        choices=MSE_SCOPES,
        default="estimated",
        help="pairs the MSE averages over",
    )
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.set_defaults(func=_cmd_simulate)

    p_det = sub.add_parser("detect", help="lead-lag matrix of a panel CSV")
    _add_common(p_det)
    _add_io_options(p_det)
    _add_detect_options(p_det, q_required=True)
    p_det.set_defaults(func=_cmd_detect)

    p_ccf = sub.add_parser("ccf", help="cross-correlation benchmark matrix")
    _add_common(p_ccf)
    _add_io_options(p_ccf)
    p_ccf.add_argument("--max-lag", type=int, default=5)
    p_ccf.set_defaults(func=_cmd_ccf)

    p_bt = sub.add_parser("backtest", help="rolling lead-lag momentum strategy")
    _add_common(p_bt)
    _add_io_options(p_bt)
    p_bt.add_argument("--method", type=_comma_list(str), default=["KM_Mod"])
    p_bt.add_argument("--window-length", type=int, default=21)
    p_bt.add_argument("--q", type=int, default=10)
    p_bt.add_argument("--s", type=int, default=1)
    p_bt.add_argument("--n-clusters", type=int, default=11)
    p_bt.add_argument("--theta", type=int, default=6)
    p_bt.add_argument("--leader-fraction", type=_comma_list(float), default=[0.75])
    p_bt.add_argument("--lookback", type=_comma_list(int), default=[7])
    p_bt.add_argument("--horizon", type=_comma_list(int), default=[7])
    p_bt.add_argument("--target-vol", type=float, default=0.15)
    p_bt.add_argument("--k-nn", type=int, default=None)
    p_bt.add_argument("--sigma-kernel", type=float, default=None)
    p_bt.add_argument("--standardize", action="store_true")
    p_bt.add_argument("--restarts", type=int, default=1)
    p_bt.add_argument("--ccf-max-lag", type=int, default=5)
    p_bt.add_argument("--grid", action="store_true", help="sweep the listed values")
    p_bt.set_defaults(func=_cmd_backtest)

    p_rank = sub.add_parser("rank", help="row-sum leader ranking of a panel")
    _add_common(p_rank)
    _add_io_options(p_rank)
    _add_detect_options(p_rank, q_required=True)
    p_rank.set_defaults(func=_cmd_rank)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "method", None) is not None and args.command == "backtest":
        bad = [m for m in args.method if m not in STRATEGY_CHOICES]
        if bad:
            parser.error(f"unknown backtest method(s): {', '.join(bad)}")
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
