"""Fit a real dataset end to end and write its report files."""

from dataclasses import dataclass
import io
import logging
from pathlib import Path

import polars as pl
from pydantic import BaseModel, ConfigDict, Field

from ..data_functions.load import save_text_atomic  # noqa: TID252
from ..data_functions.process import (  # noqa: TID252
    Grouping,
    ScalingRecord,
    back_transform_coefficients,
)
from ..models.families import FamilyId  # noqa: TID252
from ..models.selector import (  # noqa: TID252
    FitResult,
    InitStrategy,
    MultiRunResult,
    SelectionMode,
    SelectorConfig,
    initialize_gamma,
    multi_run,
    run,
    sequential_fit,
)
from ..models.structures import Dataset  # noqa: TID252
from .data_pipeline import INTERCEPT, run_data_pipeline
from .records import write_fit_record

logger = logging.getLogger(__name__)

REPORT_FILE = "report.txt"
RESULT_FILE = "fit_result.json"
NEIGHBORS_FILE = "neighbors.tsv"


class RunConfig(BaseModel):
    """Everything one fit invocation needs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input: Path
    schema_path: Path | None = None
    family: FamilyId = FamilyId.NORMAL
    mode: SelectionMode = SelectionMode.GREEDY
    delta: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_restarts: int = Field(default=1, ge=1)
    neighbor_threshold: float = Field(default=0.75, ge=0.0, le=1.0)
    sequential: bool = False
    max_rounds: int = Field(default=5, ge=1)
    init_strategy: InitStrategy = InitStrategy.BH_SCREEN
    standardize: bool = False
    compositional_reference: str | None = None
    zero_replacement: float = Field(default=0.5, gt=0.0)
    survival: bool = False
    add_intercept: bool = True
    grouping: Grouping = Grouping.PATTERN
    out: Path = Path("outputs/fit")
    workers: int | None = Field(default=None, ge=1)

    def selector_config(self, base: SelectorConfig | None = None) -> SelectorConfig:
        """Selector settings: ``base`` with this run's choices applied."""
        return SelectorConfig(
            **{
                **(base or SelectorConfig()).model_dump(),
                "mode": self.mode,
                "delta": self.delta,
                "rng_seed": self.seed,
                "n_restarts": self.n_restarts,
                "neighbor_threshold": self.neighbor_threshold,
                "init_strategy": self.init_strategy,
                "max_rounds": self.max_rounds,
            }
        )


@dataclass(frozen=True, eq=False)
class FitOutcome:
    """The fitted result and where its files went."""

    dataset: Dataset
    result: FitResult
    restarts: MultiRunResult | None
    report_path: Path
    result_path: Path
    neighbors_path: Path


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6g}"


def format_report(
    data: Dataset,
    result: FitResult,
    restarts: MultiRunResult | None = None,
    scaling: ScalingRecord | None = None,
) -> str:
    """Human-readable summary of a fit."""
    out = io.StringIO()
    refit = result.refit_summary
    out.write(f"Family: {data.spec.family_id}  N={data.N}  J={data.J}  K={data.K}\n")
    out.write(
        f"Converged: {'yes' if result.converged else 'no'}  "
        f"outer iterations: {result.n_outer}  moves: {len(result.moves)}\n"
    )
    out.write(f"Final log-likelihood: {_fmt(result.loglik)}\n\n")

    out.write(f"Selected predictors ({len(result.selected_names)}):\n")
    for k, name in zip(result.selected, result.selected_names, strict=True):
        label = int(result.gamma_final.gamma[k])
        out.write(
            f"  {name}\tlabel={label:+d}\teffect={_fmt(result.effects.get(name))}"
            f"\tround={result.rounds.get(name, 1)}\n"
        )

    out.write("\nRefit on the locked-in and selected columns:\n")
    out.write(f"  AIC={_fmt(refit.aic)}")
    if refit.r_squared is not None:
        out.write(f"  R^2={_fmt(refit.r_squared)}")
    if refit.deviance is not None:
        out.write(f"  residual deviance={_fmt(refit.deviance)}")
    out.write("\n")
    for name, estimate in refit.coefficients.items():
        out.write(
            f"  {name}\t{estimate:+.6g}\t(se {_fmt(refit.standard_errors.get(name))})\n"
        )
    if scaling is not None and scaling.scales:
        intercept = INTERCEPT if INTERCEPT in refit.coefficients else None
        original = back_transform_coefficients(refit.coefficients, scaling, intercept)
        out.write("  Coefficients on the original column scale:\n")
        for name, estimate in original.items():
            out.write(f"  {name}\t{estimate:+.6g}\n")

    report = result.neighbor_report
    out.write(
        f"\nCorrelated neighbors: {len(report.edges())} edges, "
        f"{len(report.relevant)} relevant variables\n"
    )
    for selected, neighbor, corr in report.edges():
        out.write(f"  {selected} -- {neighbor}\t{corr:+.4f}\n")

    if restarts is not None:
        out.write(
            f"\nRestarts: {len(restarts.results)}, best #{restarts.best_index}, "
            f"union of {len(restarts.union)} columns "
            f"(AIC={_fmt(restarts.union_refit.aic)})\n"
        )
        for k in restarts.union:
            out.write(f"  {data.z_names[k]}\tfrequency={restarts.frequencies[k]:.3f}\n")

    if result.warnings:
        out.write("\nWarnings:\n")
        for warning in result.warnings:
            out.write(f"  {warning}\n")
    return out.getvalue()


def neighbors_table(result: FitResult) -> str:
    """Tab-separated neighbor edge list."""
    edges = result.neighbor_report.edges()
    frame = pl.DataFrame(
        {
            "selected": [e[0] for e in edges],
            "neighbor": [e[1] for e in edges],
            "correlation": [e[2] for e in edges],
        },
        schema={"selected": pl.Utf8, "neighbor": pl.Utf8, "correlation": pl.Float64},
    )
    return frame.write_csv(separator="\t")


def fit_dataset(
    data: Dataset,
    selector: SelectorConfig,
    sequential: bool,
    workers: int | None = None,
) -> tuple[FitResult, MultiRunResult | None]:
    """Run the selector in the requested flavor."""
    if sequential:
        return sequential_fit(data, selector), None
    if selector.n_restarts > 1:
        restarts = multi_run(data, selector, workers=workers)
        return restarts.best, restarts
    return run(data, selector, initialize_gamma(data, selector)), None


def run_fit(config: RunConfig, base: SelectorConfig | None = None) -> FitOutcome:
    """Prepare the data, fit, and write report, record and neighbor files."""
    prepared = run_data_pipeline(
        config.input,
        config.schema_path,
        family=config.family,
        standardize=config.standardize,
        compositional_reference=config.compositional_reference,
        zero_replacement=config.zero_replacement,
        survival=config.survival,
        add_intercept=config.add_intercept,
        grouping=config.grouping,
    )
    data = prepared.dataset
    result, restarts = fit_dataset(
        data, config.selector_config(base), config.sequential, config.workers
    )

    out = Path(config.out)
    report_path = save_text_atomic(
        out / REPORT_FILE, format_report(data, result, restarts, prepared.scaling)
    )
    result_path = write_fit_record(result, out / RESULT_FILE)
    neighbors_path = save_text_atomic(out / NEIGHBORS_FILE, neighbors_table(result))
    logger.info(
        "Selected %d of %d columns; reports written to %s",
        len(result.selected),
        data.K,
        out,
    )
    return FitOutcome(
        dataset=data,
        result=result,
        restarts=restarts,
        report_path=report_path,
        result_path=result_path,
        neighbors_path=neighbors_path,
    )
