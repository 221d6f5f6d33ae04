"""Command-line entry points: ``trimix-fit`` and ``trimix-simulate``.

Defaults come from the composed hydra configuration; flags given on the
command line win. Exit status: 0 on a converged fit or a finished study,
2 when the selection loop hit its iteration cap, 1 on any error (argparse
usage errors also exit with 2).
"""

import argparse
from collections.abc import Callable, Sequence
import logging
from pathlib import Path
import sys
from typing import Any

import numpy as np
from omegaconf import DictConfig

from .models.families import FamilyId
from .models.selector import InitStrategy, SelectionMode, SelectorConfig
from .pipelines.fit_pipeline import RunConfig, run_fit
from .simulation.monte_carlo import (
    Method,
    run_studies,
    study_table,
    write_study_outputs,
)
from .simulation.scenarios import ScenarioId, ScenarioSpec
from .utils.config_utils import load_config, section
from .utils.logging_utils import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

_HANDLED = (ValueError, OSError, np.linalg.LinAlgError)


def _origin(error: BaseException) -> str:
    """Module in which ``error`` was raised."""
    tb = error.__traceback__
    name = __name__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", name)
        tb = tb.tb_next
    return name


def _report_failure(error: BaseException) -> int:
    logger.error("%s: %s: %s", _origin(error), type(error).__name__, error)
    return EXIT_ERROR


def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config-override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="hydra override applied to the composed config (repeatable)",
    )
    parser.add_argument("--log-level", default=None, help="root logging level")
    parser.add_argument("--workers", type=int, default=None, help="worker count")
    parser.add_argument(
        "--mode", choices=[m.value for m in SelectionMode], default=None
    )
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def fit_parser() -> argparse.ArgumentParser:
    """Arguments of ``trimix-fit``."""
    parser = argparse.ArgumentParser(
        prog="trimix-fit", description="Select predictors of a GLM response."
    )
    parser.add_argument("--input", type=Path, required=True, help="CSV data file")
    parser.add_argument("--schema", type=Path, default=None, help="column role YAML")
    parser.add_argument("--family", choices=[f.value for f in FamilyId], default=None)
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--neighbor-threshold", type=float, default=None)
    parser.add_argument("--sequential", action="store_true", default=None)
    parser.add_argument("--max-rounds", type=int, default=None)
    parser.add_argument(
        "--init", choices=[InitStrategy.BH_SCREEN.value, InitStrategy.ALL_NULL.value],
        default=None,
    )
    parser.add_argument("--standardize", action="store_true", default=None)
    parser.add_argument("--compositional-ref", default=None, metavar="COLUMN")
    parser.add_argument("--zero-replacement", type=float, default=None)
    parser.add_argument("--survival", action="store_true", default=None)
    _common_arguments(parser)
    return parser


def simulate_parser() -> argparse.ArgumentParser:
    """Arguments of ``trimix-simulate``."""
    parser = argparse.ArgumentParser(
        prog="trimix-simulate", description="Run a replicated simulation study."
    )
    parser.add_argument(
        "--scenario", required=True, choices=[s.value for s in ScenarioId]
    )
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument(
        "--methods",
        default=None,
        help=f"comma-separated subset of {','.join(m.value for m in Method)}",
    )
    _common_arguments(parser)
    return parser


def _given(value: Any, fallback: Any) -> Any:
    return fallback if value is None else value


def _prepare(args: argparse.Namespace) -> DictConfig:
    cfg = load_config(args.config_override)
    setup_logging(cfg.logging, args.log_level)
    return cfg


def build_run_config(args: argparse.Namespace, cfg: DictConfig) -> RunConfig:
    """Merge configuration defaults with the flags that were given."""
    selector = section(cfg, "selector")
    pipeline = section(cfg, "data_pipeline")
    return RunConfig(
        input=args.input,
        schema_path=args.schema,
        family=_given(args.family, pipeline["family"]),
        mode=_given(args.mode, selector["mode"]),
        delta=_given(args.delta, selector["delta"]),
        seed=_given(args.seed, selector["rng_seed"]),
        n_restarts=_given(args.restarts, selector["n_restarts"]),
        neighbor_threshold=_given(
            args.neighbor_threshold, selector["neighbor_threshold"]
        ),
        sequential=_given(args.sequential, False),
        max_rounds=_given(args.max_rounds, selector["max_rounds"]),
        init_strategy=_given(args.init, selector["init_strategy"]),
        standardize=_given(args.standardize, pipeline["standardize"]),
        compositional_reference=_given(
            args.compositional_ref, pipeline["compositional_reference"]
        ),
        zero_replacement=_given(args.zero_replacement, pipeline["zero_replacement"]),
        survival=_given(args.survival, pipeline["survival"]),
        add_intercept=pipeline["add_intercept"],
        out=_given(args.out, Path(cfg.output_dir)),
        workers=args.workers,
    )


def fit_command(config: RunConfig, base: SelectorConfig | None = None) -> int:
    """Fit and write reports; returns the exit status."""
    try:
        outcome = run_fit(config, base)
    except _HANDLED as e:
        return _report_failure(e)
    if not outcome.result.converged:
        logger.warning("Fit did not converge; results written to %s", config.out)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def simulate_command(
    scenario: ScenarioId | str,
    overrides: dict[str, Any] | None = None,
    cfg: DictConfig | None = None,
) -> int:
    """Run a study for ``scenario`` and write its comparison table.

    ``overrides`` may set reps, n, k, seed, methods, out, workers, mode and delta.
    """
    options = dict(overrides or {})
    try:
        cfg = cfg if cfg is not None else load_config()
        simulation = section(cfg, "simulation")
        updates = {
            key: options[key]
            for key in ("mode", "delta")
            if options.get(key) is not None
        }
        updates["screen_level"] = simulation["fdr_level"]
        selector = SelectorConfig(**{**section(cfg, "selector"), **updates})
        spec = ScenarioSpec(
            id=ScenarioId(scenario),
            N=_given(options.get("n"), simulation["n"]),
            K=_given(options.get("k"), simulation["k"]),
            rng_seed=_given(options.get("seed"), simulation["seed"]),
            replications=_given(options.get("reps"), simulation["replications"]),
        )
        methods = options.get("methods") or simulation["methods"]
        if isinstance(methods, str):
            methods = [m.strip() for m in methods.split(",") if m.strip()]
        results = run_studies(spec, selector, methods, options.get("workers"))
        out = Path(_given(options.get("out"), simulation["output_dir"]))
        write_study_outputs(results, out)
    except _HANDLED as e:
        return _report_failure(e)
    sys.stdout.write(study_table(results).write_csv(separator="\t"))
    return EXIT_OK


def fit_main(argv: Sequence[str] | None = None) -> int:
    """Entry point of ``trimix-fit``."""
    args = fit_parser().parse_args(argv)
    try:
        cfg = _prepare(args)
        config = build_run_config(args, cfg)
        base = SelectorConfig(**section(cfg, "selector"))
    except _HANDLED as e:
        logging.basicConfig()
        return _report_failure(e)
    return fit_command(config, base)


def simulate_main(argv: Sequence[str] | None = None) -> int:
    """Entry point of ``trimix-simulate``."""
    args = simulate_parser().parse_args(argv)
    try:
        cfg = _prepare(args)
    except _HANDLED as e:
        logging.basicConfig()
        return _report_failure(e)
    overrides = {
        "reps": args.reps,
        "n": args.n,
        "k": args.k,
        "seed": args.seed,
        "methods": args.methods,
        "out": args.out,
        "workers": args.workers,
        "mode": args.mode,
        "delta": args.delta,
    }
    return simulate_command(args.scenario, overrides, cfg)


_COMMANDS: dict[str, Callable[[Sequence[str] | None], int]] = {
    "fit": fit_main,
    "simulate": simulate_main,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Dispatch ``fit`` or ``simulate`` subcommands."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in _COMMANDS:
        sys.stderr.write(f"usage: run.py {{{','.join(_COMMANDS)}}} [options]\n")
        return EXIT_NOT_CONVERGED
    return _COMMANDS[argv[0]](argv[1:])
