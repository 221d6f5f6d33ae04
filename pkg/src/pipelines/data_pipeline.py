"""This module provides the pipeline from a CSV file to a model-ready Dataset."""

from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np

from ..data_functions import load, process  # noqa: TID252
from ..data_functions.load import ColumnRole, RawTable  # noqa: TID252
from ..models.families import FamilyId, FamilySpec  # noqa: TID252
from ..models.structures import Dataset  # noqa: TID252
from ..utils.exceptions import SchemaError  # noqa: TID252

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"


@dataclass(frozen=True, eq=False)
class PreparedData:
    """The dataset handed to the selector and what was done to get it."""

    dataset: Dataset
    table: RawTable
    scaling: process.ScalingRecord | None


def dataset_from_table(
    table: RawTable, family: FamilyId | str, add_intercept: bool = True
) -> Dataset:
    """Assemble y, X and Z from the column roles.

    With a ``weights`` column the binomial response holds success counts and
    is divided by the trial counts; otherwise it must already be a proportion.
    """
    response = table.single(ColumnRole.RESPONSE)
    if response is None:
        raise SchemaError("table has no response column")
    family_id = FamilyId(family)
    frame = table.frame
    n = frame.height

    weights_column = table.single(ColumnRole.WEIGHTS)
    weights = frame[weights_column].to_numpy() if weights_column else None
    y = frame[response].to_numpy().astype(np.float64)
    if family_id is FamilyId.BINOMIAL and weights is not None:
        y = y / weights

    locked = table.columns(ColumnRole.LOCKED_IN)
    putative = table.columns(ColumnRole.PUTATIVE)
    x_names = ([INTERCEPT] if add_intercept else []) + locked
    blocks = [np.ones((n, 1))] if add_intercept else []
    if locked:
        blocks.append(frame.select(locked).to_numpy())
    X = np.column_stack(blocks) if blocks else np.empty((n, 0))  # noqa: N806
    Z = (  # noqa: N806
        frame.select(putative).to_numpy() if putative else np.empty((n, 0))
    )
    return Dataset(
        y=y,
        X=X,
        Z=Z,
        spec=FamilySpec.create(family_id, n, weights),
        x_names=tuple(x_names),
        z_names=tuple(putative),
    )


def run_data_pipeline(
    path: Path | str,
    schema: Path | str | dict[str, ColumnRole] | None = None,
    family: FamilyId | str = FamilyId.NORMAL,
    standardize: bool = False,
    compositional_reference: str | None = None,
    zero_replacement: float = 0.5,
    survival: bool = False,
    add_intercept: bool = True,
    grouping: process.Grouping | str = process.Grouping.PATTERN,
) -> PreparedData:
    """Load, transform and assemble a dataset.

    Order: load, log-ratio transform, standardization, then either the
    survival expansion (Poisson family, interval indicators in X) or the
    plain role-based assembly with an optional intercept.
    """
    table = load.load_csv(path, schema)
    if compositional_reference is not None:
        table = process.compositional_logratio(
            table, compositional_reference, zero_replacement
        )
    scaling = None
    if standardize:
        table, scaling = process.standardize_putative(table)

    if survival or table.is_survival:
        if not table.is_survival:
            raise SchemaError("survival expansion needs time and event columns")
        if FamilyId(family) is not FamilyId.POISSON:
            logger.info(
                "Survival expansion fits the Poisson family; ignoring '%s'", family
            )
        records, names = process.records_from_table(table)
        dataset = process.survival_to_poisson(
            records,
            names,
            locked_in=table.columns(ColumnRole.LOCKED_IN),
            grouping=grouping,
        )
    else:
        dataset = dataset_from_table(table, family, add_intercept)

    logger.info(
        "Prepared %s dataset: N=%d, J=%d, K=%d",
        dataset.spec.family_id,
        dataset.N,
        dataset.J,
        dataset.K,
    )
    return PreparedData(dataset=dataset, table=table, scaling=scaling)
