"""Selection scoring and the unpenalized refit used to summarize a selection."""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import statsmodels.api as sm

from ..models.families import FamilyId  # noqa: TID252
from ..models.structures import Dataset  # noqa: TID252

logger = logging.getLogger(__name__)


def score(selected: Iterable[int], truth: Iterable[int]) -> tuple[int, int]:
    """True and false positive counts of ``selected`` against ``truth``."""
    chosen, relevant = set(selected), set(truth)
    return len(chosen & relevant), len(chosen - relevant)


@dataclass(frozen=True)
class RefitSummary:
    """Plain GLM refit of the locked-in columns plus a set of putative columns.

    ``r_squared`` is filled for the normal family, ``deviance`` for the others.
    AIC counts the residual variance as a parameter for the normal family.
    """

    family: FamilyId
    columns: tuple[str, ...]
    coefficients: dict[str, float] = field(default_factory=dict)
    standard_errors: dict[str, float] = field(default_factory=dict)
    aic: float = float("nan")
    r_squared: float | None = None
    deviance: float | None = None
    loglik: float = float("nan")


def _statsmodels_family(family_id: FamilyId) -> sm.families.Family:
    if family_id is FamilyId.BINOMIAL:
        return sm.families.Binomial()
    if family_id is FamilyId.POISSON:
        return sm.families.Poisson()
    return sm.families.Gaussian()


def _empty_refit(data: Dataset) -> RefitSummary:
    """Summary for a model with no estimated mean parameters."""
    family_id = data.spec.family_id
    m = data.spec.prior_weights
    if family_id is FamilyId.NORMAL:
        residual = data.y - data.offset_vector
        variance = float(np.sum(m * residual**2) / data.N)
        loglik = float(
            -0.5 * data.N * (np.log(2.0 * np.pi * variance) + 1.0)
            + 0.5 * np.sum(np.log(m))
        )
        return RefitSummary(
            family=family_id,
            columns=(),
            aic=-2.0 * loglik + 2.0,
            r_squared=0.0,
            loglik=loglik,
        )
    sm_family = _statsmodels_family(family_id)
    mu = sm_family.link.inverse(data.offset_vector)
    loglik = float(sm_family.loglike(data.y, mu, var_weights=m, scale=1.0))
    deviance = float(sm_family.deviance(data.y, mu, var_weights=m))
    return RefitSummary(
        family=family_id,
        columns=(),
        aic=-2.0 * loglik,
        deviance=deviance,
        loglik=loglik,
    )


def refit_summary(data: Dataset, selected: Sequence[int]) -> RefitSummary:
    """Fit an ordinary GLM on X plus the selected putative columns."""
    chosen = sorted(set(selected))
    design = np.column_stack([data.X, data.Z[:, chosen]])
    names = (*data.x_names, *(data.z_names[k] for k in chosen))
    if design.shape[1] == 0:
        return _empty_refit(data)

    family_id = data.spec.family_id
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if family_id is FamilyId.NORMAL:
            result = sm.WLS(
                data.y - data.offset_vector, design, weights=data.spec.prior_weights
            ).fit()
            n_params = design.shape[1] + 1
            return RefitSummary(
                family=family_id,
                columns=names,
                coefficients=dict(zip(names, map(float, result.params), strict=True)),
                standard_errors=dict(zip(names, map(float, result.bse), strict=True)),
                aic=float(-2.0 * result.llf + 2.0 * n_params),
                r_squared=float(result.rsquared),
                loglik=float(result.llf),
            )
        result = sm.GLM(
            data.y,
            design,
            family=_statsmodels_family(family_id),
            offset=data.offset_vector,
            var_weights=data.spec.prior_weights,
        ).fit()
    return RefitSummary(
        family=family_id,
        columns=names,
        coefficients=dict(zip(names, map(float, result.params), strict=True)),
        standard_errors=dict(zip(names, map(float, result.bse), strict=True)),
        aic=float(result.aic),
        deviance=float(result.deviance),
        loglik=float(result.llf),
    )
