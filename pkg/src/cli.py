# src/cli.py
"""
toric-credit command line.

Every subcommand reads a JSON run config (--config), validates it
against its schema and writes CSV or JSON atomically to --out, or to
stdout when --out is omitted. Exit codes: 0 success, 2 invalid input,
3 numerical failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, TypeVar

import pandas as pd
from pydantic import BaseModel

from . import __version__
from .config import settings
from .core.copula import CopulaScenarioSet, implied_correlation_report
from .core.error_handling import handle_errors
from .core.exceptions import EXIT_NUMERIC, InvalidParametersException, UsageException
from .core.graph_model import build_marginal_map, joint_distribution
from .core.multiperiod import loss_term_structure, simulate_paths, transition_matrix
from .core.pricing import LossTermStructure, price_tranches
from .core.sector_loss import correlation_surface, loss_distribution
from .schemas import (
    RUN_CONFIGS,
    CalibrateConfig,
    CalibrationConfig,
    CopulaPriceConfig,
    CorrSurfaceConfig,
    FitSmileConfig,
    GraphDocument,
    ImpliedCorrConfig,
    LossDistConfig,
    MultiLossConfig,
    PriceConfig,
    ReproduceConfig,
    SimulateConfig,
    grid_values,
)
from .services.calibration_service import fit, fit_counts
from .services.reproduce_service import get_reproduce_service
from .services.smile_service import fit_smile_params
from .utils.helper import dump_json, frame_to_csv, write_csv, write_json, write_text_atomic
from .utils.logging import configure_logging

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad usage"""

    def error(self, message: str):  # type: ignore[override]
        raise UsageException(message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--seed", type=int, help="random seed override")
    common.add_argument("--threads", type=int, help="worker threads (env TORIC_CREDIT_THREADS)")
    common.add_argument("--lgd", action="store_true", help="apply (1-R) to graphical losses")
    common.add_argument("--log-level", default=None, help="logging level")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toric-credit", description="Graphical models of correlated defaults")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common_flags()
    for name, help_text in (
        ("calibrate", "fit node and edge weights to target marginals"),
        ("loss-dist", "one-period sector-model loss distribution"),
        ("corr-surface", "pairwise correlation over an (eta_S, eta_FS) grid"),
        ("multi-loss", "multi-period loss distributions from the transition kernel"),
        ("simulate", "Monte Carlo multi-period loss distributions"),
        ("price", "tranche spreads from the multi-period model or a term-structure CSV"),
        ("copula-price", "Monte Carlo normal-copula tranche spreads"),
        ("implied-corr", "copula correlation implied by tranche spreads"),
        ("fit-smile", "fit graphical parameters that correct the copula smile"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    reproduce = sub.add_parser("reproduce", parents=[common], help="figure data tables")
    reproduce.add_argument("figure", choices=sorted(get_reproduce_service().figures()))
    schema = sub.add_parser("schema", parents=[common], help="JSON schema of a run config")
    schema.add_argument("subcommand", choices=sorted(RUN_CONFIGS))
    return parser


# ============================================================================
# PLUMBING
# ============================================================================

def load_config(args: argparse.Namespace, model: type[M]) -> M:
    if not args.config:
        raise InvalidParametersException("--config is required", path="--config")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidParametersException(str(exc), path=args.config) from None
    return model.model_validate_json(text)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_text_atomic(out, text)
        logger.info("Wrote %s", out)


def _emit_frame(frame: pd.DataFrame, out: Optional[str]) -> None:
    _emit(frame_to_csv(frame), out)


def _seed(args: argparse.Namespace, configured: Optional[int] = None) -> int:
    if args.seed is not None:
        return args.seed
    return settings.seed if configured is None else configured


def _threads(args: argparse.Namespace) -> int:
    threads = args.threads if args.threads is not None else settings.threads
    if threads < 1:
        raise UsageException("--threads must be positive")
    return threads


def _lgd_factor(args: argparse.Namespace, recovery: float) -> float:
    return 1.0 - recovery if (args.lgd or settings.apply_lgd) else 1.0


def _sidecar(out: Optional[str], suffix: str) -> Optional[Path]:
    if out is None:
        return None
    path = Path(out)
    return path.with_name(path.stem + suffix)


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = load_config(args, CalibrateConfig)
    graph = cfg.graph.graph()
    overrides: dict[str, Any] = {
        key: value
        for key, value in (
            ("tolerance", cfg.tolerance),
            ("max_iterations", cfg.max_iterations),
            ("backend", cfg.backend),
        )
        if value is not None
    }
    config = CalibrationConfig(**overrides)
    if cfg.counts is not None:
        result = fit_counts(graph, cfg.counts, config)
        target = result.achieved.vector
    else:
        spec = cfg.marginal_spec()
        result = fit(graph, spec, config)
        target = spec.vector
    document = GraphDocument.from_model(graph, result.params).model_dump(exclude_none=True)
    document.update({"iterations": int(result.iterations), "residual": float(result.residual)})
    _emit(dump_json(document), args.out)

    labels = build_marginal_map(graph).row_labels[:-1]
    achieved = result.achieved.vector
    report = pd.DataFrame(
        {"marginal": labels, "target": target, "achieved": achieved, "error": achieved - target}
    )
    sidecar = _sidecar(args.out, ".residuals.csv")
    if sidecar is not None:
        write_csv(sidecar, report)
    joint = _sidecar(args.out, ".distribution.csv")
    if joint is not None:
        dist = joint_distribution(graph, result.params)
        write_csv(joint, pd.DataFrame(dist.rows(), columns=["w", "p"]))
    return 0


def cmd_loss_dist(args: argparse.Namespace) -> int:
    cfg = load_config(args, LossDistConfig)
    dist = loss_distribution(cfg.sector)
    _emit_frame(pd.DataFrame(dist.rows(), columns=["n", "prob"]), args.out)
    return 0


def cmd_corr_surface(args: argparse.Namespace) -> int:
    cfg = load_config(args, CorrSurfaceConfig)
    points = correlation_surface(
        cfg.q, cfg.n_firms, grid_values(cfg.eta_S), grid_values(cfg.eta_FS), _threads(args)
    )
    frame = pd.DataFrame(
        [(p.eta_S, p.eta_FS, p.eta_F_star, p.rho) for p in points],
        columns=["eta_S", "eta_FS", "eta_F_star", "rho"],
    )
    _emit_frame(frame, args.out)
    failed = sum(p.error is not None for p in points)
    if failed:
        logger.warning("%d of %d grid points failed", failed, len(points))
    return 0


def cmd_multi_loss(args: argparse.Namespace) -> int:
    cfg = load_config(args, MultiLossConfig)
    rows = []
    horizon = max(cfg.steps, default=0)
    for removal_prob in cfg.removal_probs:
        spec = cfg.chain.spec(removal_prob)
        slices = loss_term_structure(spec, horizon, transition_matrix(spec))
        for k in cfg.steps:
            rows.extend((removal_prob, k, m, p) for m, p in slices[k].rows())
    _emit_frame(pd.DataFrame(rows, columns=["p_R", "k", "m", "prob"]), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args, SimulateConfig)
    seed = _seed(args, cfg.seed)
    threads = _threads(args)
    rows = []
    horizon = max(cfg.steps, default=0)
    for removal_prob in cfg.removal_probs:
        spec = cfg.chain.spec(removal_prob)
        paths = simulate_paths(spec, horizon, cfg.n_paths, seed=seed, threads=threads)
        for k in cfg.steps:
            rows.extend(
                (removal_prob, k, m, p) for m, p in paths.empirical_distribution(k).rows()
            )
    _emit_frame(pd.DataFrame(rows, columns=["p_R", "k", "m", "prob"]), args.out)
    return 0


def read_term_structure(path: str, lgd: float) -> LossTermStructure:
    """Long CSV with columns k, loss, prob; loss is the portfolio loss fraction."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise InvalidParametersException(str(exc), path="term_structure_csv") from None
    missing = {"k", "loss", "prob"} - set(frame.columns)
    if missing:
        raise InvalidParametersException(
            f"missing columns {sorted(missing)}", path="term_structure_csv"
        )
    table = frame.pivot_table(index="k", columns="loss", values="prob", aggfunc="sum", fill_value=0.0)
    expected = list(range(int(table.index.max()) + 1))
    if list(table.index) != expected:
        raise InvalidParametersException("slices must cover k = 0..K", path="term_structure_csv")
    return LossTermStructure(
        support=table.columns.to_numpy(dtype=float),
        probabilities=table.to_numpy(dtype=float),
        lgd=lgd,
    )


def cmd_price(args: argparse.Namespace) -> int:
    cfg = load_config(args, PriceConfig)
    contract = cfg.contract.contract()
    lgd = _lgd_factor(args, cfg.recovery)
    if cfg.chain is not None:
        spec = cfg.chain.spec(cfg.removal_prob)
        term = LossTermStructure.from_default_counts(
            loss_term_structure(spec, contract.n_periods), lgd=lgd
        )
    else:
        assert cfg.term_structure_csv is not None
        term = read_term_structure(cfg.term_structure_csv, lgd)
    quotes = price_tranches(contract, term)
    document = {
        quote.label: {"spread": quote.spread, "spread_bps": quote.spread_bps} for quote in quotes
    }
    _emit(dump_json(document), args.out)
    return 0


def cmd_copula_price(args: argparse.Namespace) -> int:
    cfg = load_config(args, CopulaPriceConfig)
    scenarios = CopulaScenarioSet(cfg.copula, cfg.n_paths, _seed(args, cfg.seed))
    quotes = scenarios.tranche_quotes(cfg.contract.contract())
    frame = pd.DataFrame(
        [(q.label, q.spread_bps, q.stderr_bps) for q in quotes],
        columns=["tranche", "spread_bps", "stderr_bps"],
    )
    _emit_frame(frame, args.out)
    return 0


def cmd_implied_corr(args: argparse.Namespace) -> int:
    cfg = load_config(args, ImpliedCorrConfig)
    contract = cfg.contract.contract()
    unknown = set(cfg.observed) - {t.label for t in contract.tranches}
    if unknown:
        raise InvalidParametersException(f"unknown tranche labels {sorted(unknown)}", path="observed")
    scenarios = CopulaScenarioSet(cfg.copula, cfg.n_paths, _seed(args, cfg.seed))
    rows = implied_correlation_report(cfg.observed, contract, scenarios)
    frame = pd.DataFrame(
        [(row.label, row.implied_rho_A) for row in rows], columns=["tranche", "implied_rho_A"]
    )
    _emit_frame(frame, args.out)
    return EXIT_NUMERIC if any(row.implied_rho_A is None for row in rows) else 0


def cmd_fit_smile(args: argparse.Namespace) -> int:
    cfg = load_config(args, FitSmileConfig)
    spreads = []
    summaries = []
    for rating in cfg.ratings:
        update: dict[str, Any] = {}
        if args.seed is not None:
            update["seed"] = args.seed
        if args.lgd:
            update["apply_lgd"] = True
        result = fit_smile_params(rating.model_copy(update=update), with_implied=cfg.implied)
        spreads.extend({"rating": rating.name, **row} for row in result.table())
        summaries.append(result.to_dict())
    _emit_frame(pd.DataFrame(spreads), args.out)
    sidecar = _sidecar(args.out, ".params.json")
    if sidecar is not None:
        write_json(sidecar, summaries)
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    cfg = load_config(args, ReproduceConfig) if args.config else ReproduceConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    if args.threads is not None:
        cfg = cfg.model_copy(update={"threads": _threads(args)})
    out_dir = Path(args.out or "results")
    tables = get_reproduce_service().run(args.figure, cfg)
    for name, frame in tables.items():
        write_csv(out_dir / name, frame)
        logger.info("Wrote %s", out_dir / name)
    return 0


def cmd_schema(args: argparse.Namespace) -> int:
    _emit(dump_json(RUN_CONFIGS[args.subcommand].model_json_schema()), args.out)
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "calibrate": cmd_calibrate,
    "loss-dist": cmd_loss_dist,
    "corr-surface": cmd_corr_surface,
    "multi-loss": cmd_multi_loss,
    "simulate": cmd_simulate,
    "price": cmd_price,
    "copula-price": cmd_copula_price,
    "implied-corr": cmd_implied_corr,
    "fit-smile": cmd_fit_smile,
    "reproduce": cmd_reproduce,
    "schema": cmd_schema,
}


@handle_errors
def _dispatch(args: argparse.Namespace) -> int:
    return COMMANDS[args.command](args)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageException as exc:
        sys.stderr.write(f"{exc.message}\n")
        return exc.code
    configure_logging(args.log_level)
    return _dispatch(args)


def main() -> None:
    sys.exit(run())
