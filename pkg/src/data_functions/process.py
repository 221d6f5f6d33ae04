"""Data-prep transforms applied before fitting.

Standardization of the putative columns, the additive log-ratio transform of
compositional counts, and the expansion of right-censored survival records
into an artificial Poisson regression over the risk sets.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import StrEnum
import logging

import numpy as np
import polars as pl

from ..models.families import FamilyId, FamilySpec  # noqa: TID252
from ..models.structures import Dataset  # noqa: TID252
from ..utils.exceptions import (  # noqa: TID252
    ConstantColumnError,
    NoEventsError,
    SchemaError,
    ValidationError,
)
from .load import ColumnRole, RawTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalingRecord:
    """Column means and sample standard deviations used to standardize."""

    means: dict[str, float]
    scales: dict[str, float]


def standardize_putative(table: RawTable) -> tuple[RawTable, ScalingRecord]:
    """Center every putative column and scale it to unit sample sd (ddof=1).

    Raises:
        ConstantColumnError: If a putative column does not vary.
    """
    columns = table.columns(ColumnRole.PUTATIVE)
    if not columns:
        return table, ScalingRecord(means={}, scales={})
    stats = table.frame.select(
        *(pl.col(c).mean().alias(f"{c}__mean") for c in columns),
        *(pl.col(c).std(ddof=1).alias(f"{c}__sd") for c in columns),
    ).row(0, named=True)
    means = {c: float(stats[f"{c}__mean"]) for c in columns}
    scales = {c: float(stats[f"{c}__sd"] or 0.0) for c in columns}
    for c in columns:
        if not scales[c] > 1e-12 * max(1.0, abs(means[c])):
            raise ConstantColumnError(c)

    frame = table.frame.with_columns(
        ((pl.col(c) - means[c]) / scales[c]).alias(c) for c in columns
    )
    return table.with_frame(frame), ScalingRecord(means=means, scales=scales)


def back_transform_coefficients(
    coefficients: Mapping[str, float],
    record: ScalingRecord,
    intercept: str | None = "intercept",
) -> dict[str, float]:
    """Map coefficients fitted on standardized columns to the original scale.

    beta_k becomes beta_k / s_k, and the intercept absorbs
    -sum_k beta_k m_k / s_k. Names absent from the record pass through.
    """
    result: dict[str, float] = {}
    shift = 0.0
    for name, value in coefficients.items():
        if name in record.scales:
            result[name] = value / record.scales[name]
            shift += value * record.means[name] / record.scales[name]
        else:
            result[name] = value
    if shift:
        if intercept is None or intercept not in result:
            raise ValidationError(
                "centered columns need an intercept to absorb the mean shift"
            )
        result[intercept] -= shift
    return result


def compositional_logratio(
    table: RawTable,
    reference_column: str,
    zero_replacement: float = 0.5,
    columns: Sequence[str] | None = None,
) -> RawTable:
    """Replace compositional counts by log ratios against ``reference_column``.

    Zeros become ``zero_replacement``, rows are closed to sum one, each column
    becomes log(z_j / z_ref), and the reference column is dropped.

    Raises:
        SchemaError: If the reference is not one of the compositional columns.
        ValidationError: On negative counts or a non-positive replacement.
    """
    parts = list(columns) if columns is not None else table.columns(ColumnRole.PUTATIVE)
    if reference_column not in parts:
        raise SchemaError(
            f"reference column '{reference_column}' is not a compositional column"
        )
    if not zero_replacement > 0.0:
        raise ValidationError(f"zero_replacement must be > 0, got {zero_replacement}")
    negative = table.frame.select(pl.any_horizontal(pl.col(parts) < 0).any()).item()
    if negative:
        raise ValidationError("compositional columns contain negative counts")

    replaced = table.frame.with_columns(
        pl.when(pl.col(c) == 0)
        .then(pl.lit(zero_replacement))
        .otherwise(pl.col(c))
        .alias(c)
        for c in parts
    )
    total = pl.sum_horizontal(parts)
    closed = replaced.with_columns((pl.col(c) / total).alias(c) for c in parts)
    others = [c for c in parts if c != reference_column]
    frame = closed.with_columns(
        (pl.col(c) / pl.col(reference_column)).log().alias(c) for c in others
    ).drop(reference_column)
    logger.info(
        "Log-ratio transform of %d columns against '%s'", len(others), reference_column
    )
    return table.with_frame(frame)


class Grouping(StrEnum):
    """How subjects are pooled within a risk set."""

    PATTERN = "pattern"
    SUBJECT = "subject"


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: follow-up time, event indicator and covariates."""

    time: float
    event: bool
    covariates: tuple[float, ...]

    def __post_init__(self) -> None:
        """Follow-up times must be positive."""
        if not (np.isfinite(self.time) and self.time > 0.0):
            raise ValidationError(f"survival time must be > 0, got {self.time}")


def records_from_table(table: RawTable) -> tuple[list[SurvivalRecord], list[str]]:
    """Survival records from a table with time and event columns.

    Covariates are the locked-in columns followed by the putative ones; the
    returned names follow the same order.

    Raises:
        ValidationError: If the event column holds values other than 0 and 1.
    """
    time, event = table.single(ColumnRole.TIME), table.single(ColumnRole.EVENT)
    if time is None or event is None:
        raise SchemaError("table has no time/event pair")
    names = table.columns(ColumnRole.LOCKED_IN) + table.columns(ColumnRole.PUTATIVE)
    frame = table.frame
    if not frame[event].is_in([0.0, 1.0]).all():
        raise ValidationError(f"event column '{event}' must contain only 0 and 1")
    covariates = (
        frame.select(names).to_numpy() if names else np.empty((frame.height, 0))
    )
    records = [
        SurvivalRecord(time=float(t), event=bool(e), covariates=tuple(map(float, row)))
        for t, e, row in zip(
            frame[time].to_list(), frame[event].to_list(), covariates, strict=True
        )
    ]
    return records, names


def survival_to_poisson(
    records: Sequence[SurvivalRecord],
    covariate_names: Sequence[str],
    locked_in: Sequence[str] = (),
    grouping: Grouping | str = Grouping.PATTERN,
) -> Dataset:
    """Expand survival records over the risk sets of the distinct event times.

    For event time t_h and covariate group j at risk (time >= t_h) one row is
    emitted with count Y_hj (events of group j at t_h), offset log N_hj (group
    members at risk) and an indicator for interval h in X. Covariates named
    in ``locked_in`` go to X, the rest to Z.

    Raises:
        NoEventsError: If no record has an event.
    """
    names = list(covariate_names)
    if any(len(r.covariates) != len(names) for r in records):
        raise ValidationError("every record needs one value per covariate name")
    unknown = [c for c in locked_in if c not in names]
    if unknown:
        raise SchemaError(f"locked-in covariates not among the covariates: {unknown}")
    if not any(r.event for r in records):
        raise NoEventsError("survival data contains no events")

    subjects = pl.DataFrame(
        {
            "__subject": np.arange(len(records)),
            "__time": [r.time for r in records],
            "__event": [r.event for r in records],
        }
    ).hstack(
        pl.DataFrame(
            {c: [r.covariates[i] for r in records] for i, c in enumerate(names)},
            schema=dict.fromkeys(names, pl.Float64),
        )
    )
    key = names if Grouping(grouping) is Grouping.PATTERN and names else ["__subject"]
    subjects = subjects.join(
        subjects.select(key).unique(maintain_order=True).with_row_index("__group"),
        on=key,
        how="left",
    )
    event_times = (
        subjects.filter(pl.col("__event"))
        .select(pl.col("__time").alias("__event_time"))
        .unique()
        .sort("__event_time")
        .with_row_index("__interval")
    )
    counts = (
        subjects.join(event_times, how="cross")
        .filter(pl.col("__time") >= pl.col("__event_time"))
        .group_by("__interval", "__group")
        .agg(
            pl.len().alias("__at_risk"),
            (pl.col("__event") & (pl.col("__time") == pl.col("__event_time")))
            .sum()
            .alias("__events"),
            *(pl.col(c).first() for c in names),
        )
        .sort("__interval", "__group")
    )

    q = event_times.height
    alpha = np.zeros((counts.height, q))
    alpha[np.arange(counts.height), counts["__interval"].to_numpy()] = 1.0
    putative = [c for c in names if c not in set(locked_in)]
    X = alpha  # noqa: N806
    if locked_in:
        covariates = counts.select(list(locked_in)).to_numpy()
        X = np.column_stack([alpha, covariates])  # noqa: N806
    Z = (  # noqa: N806
        counts.select(putative).to_numpy() if putative else np.empty((counts.height, 0))
    )
    logger.info(
        "Survival expansion: %d subjects, %d event times, %d rows",
        len(records),
        q,
        counts.height,
    )
    return Dataset(
        y=counts["__events"].to_numpy().astype(np.float64),
        X=X,
        Z=Z,
        spec=FamilySpec.create(FamilyId.POISSON, counts.height),
        x_names=(*(f"interval_{h + 1}" for h in range(q)), *locked_in),
        z_names=tuple(putative),
        offset=np.log(counts["__at_risk"].to_numpy().astype(np.float64)),
    )
