"""One-predictor-at-a-time screening with Benjamini-Hochberg control.

Each putative column is tested alone, with the locked-in design X kept in
the model. For the normal family the K regressions are solved jointly by
partialling X out of y and Z; binomial and Poisson columns are fitted with
statsmodels GLMs (Poisson as quasi-Poisson, dispersion from Pearson's X2).
"""

from dataclasses import dataclass
import logging
import warnings

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, stats
import statsmodels.api as sm
from statsmodels.stats.multitest import multipletests
from statsmodels.tools.sm_exceptions import PerfectSeparationError

from ..utils.exceptions import ValidationError  # noqa: TID252
from .families import FamilyId
from .structures import Dataset, MixtureAssignment

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class MarginalTests:
    """Per-column marginal coefficient and two-sided p-value."""

    coefficients: FloatArray
    pvalues: FloatArray


def _normal_marginal_tests(data: Dataset) -> MarginalTests:
    sqrt_m = np.sqrt(data.spec.prior_weights)
    y = (data.y - data.offset_vector) * sqrt_m
    Z = data.Z * sqrt_m[:, None]  # noqa: N806
    if data.J:
        basis = linalg.orth(data.X * sqrt_m[:, None])
        y = y - basis @ (basis.T @ y)
        Z = Z - basis @ (basis.T @ Z)  # noqa: N806
        rank_x = basis.shape[1]
    else:
        rank_x = 0
    df = data.N - rank_x - 1
    if df <= 0:
        raise ValidationError("too few observations for marginal tests")

    zz = np.einsum("ij,ij->j", Z, Z)
    zy = Z.T @ y
    yy = float(y @ y)
    usable = zz > 1e-12 * max(float(np.max(zz, initial=0.0)), 1e-300)
    coef = np.where(usable, zy / np.where(usable, zz, 1.0), 0.0)
    rss = np.maximum(yy - coef * zy, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(rss / df / np.where(usable, zz, 1.0))
        t = np.where(se > 0.0, coef / se, np.inf * np.sign(coef))
    pvalues = np.where(usable, 2.0 * stats.t.sf(np.abs(t), df), 1.0)
    return MarginalTests(coefficients=coef, pvalues=np.nan_to_num(pvalues, nan=1.0))


def _glm_marginal_tests(data: Dataset) -> MarginalTests:
    family_id = data.spec.family_id
    sm_family = (
        sm.families.Binomial()
        if family_id is FamilyId.BINOMIAL
        else sm.families.Poisson()
    )
    scale = "X2" if family_id is FamilyId.POISSON else None
    coef = np.zeros(data.K)
    pvalues = np.ones(data.K)
    for k in range(data.K):
        design = np.column_stack([data.X, data.Z[:, k]])
        model = sm.GLM(
            data.y,
            design,
            family=sm_family,
            offset=data.offset_vector,
            var_weights=data.spec.prior_weights,
        )
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = model.fit(scale=scale)
        except (PerfectSeparationError, np.linalg.LinAlgError, ValueError) as e:
            logger.debug("Marginal fit failed for %s: %s", data.z_names[k], e)
            continue
        if np.isfinite(result.pvalues[-1]):
            coef[k] = result.params[-1]
            pvalues[k] = result.pvalues[-1]
    return MarginalTests(coefficients=coef, pvalues=pvalues)


def marginal_tests(data: Dataset) -> MarginalTests:
    """Fit the K single-predictor models and return coefficients and p-values."""
    if data.spec.family_id is FamilyId.NORMAL:
        return _normal_marginal_tests(data)
    return _glm_marginal_tests(data)


def bh_discoveries(pvalues: FloatArray, level: float = 0.05) -> NDArray[np.bool_]:
    """Benjamini-Hochberg rejections at FDR ``level``."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    if pvalues.size == 0:
        return np.zeros(0, dtype=bool)
    reject, _, _, _ = multipletests(pvalues, alpha=level, method="fdr_bh")
    return np.asarray(reject, dtype=bool)


def bh_baseline(data: Dataset, level: float = 0.05) -> list[int]:
    """Indices of putative columns discovered by the marginal BH procedure."""
    tests = marginal_tests(data)
    return np.flatnonzero(bh_discoveries(tests.pvalues, level)).tolist()


def bh_screen(data: Dataset, level: float = 0.05) -> MixtureAssignment:
    """Label every discovery with the sign of its marginal coefficient."""
    tests = marginal_tests(data)
    reject = bh_discoveries(tests.pvalues, level)
    gamma = np.where(reject, np.sign(tests.coefficients), 0.0).astype(np.int8)
    logger.info(
        "Marginal screen at FDR %.3g: %d of %d columns discovered",
        level,
        int(reject.sum()),
        data.K,
    )
    return MixtureAssignment(gamma)
