"""Synthetic benchmark scenarios with known true predictors.

Normal scenarios N1-N9 start from K independent Unif[-1, 1] columns, some of
which are replaced by correlated constructions. Binary scenarios B1-B3 and
Poisson scenarios P1-P2 draw the response from the stated linear predictor.
Every dataset has an intercept as its only locked-in column. Truth sets are
0-based column indices.
"""

from collections.abc import Callable
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg, special

from ..models.families import FamilyId, FamilySpec  # noqa: TID252
from ..models.structures import Dataset  # noqa: TID252
from ..utils.seed_utils import child_seed, make_rng  # noqa: TID252

FloatArray = NDArray[np.float64]

NOISE_SD = 0.1
N2_NOISE_SD = 0.5
PERTURBATION_SD = 0.2
AR_RHO = 0.95
HUB_SIZE = 10
HUB_CORRELATION = 0.5
HUB_COEFFICIENT = 2.0

N7_BETA = (5, 1, 2, 4, 9, 3, 4, 1, 3, 2, 4, 2, 3, 1, 7)
N8_BETA = (5, 7, 2, 4, 9, 3, 4, 1, 3, 2)
N9_BETA = (2, 2, 2, 2, 2, 2, 6, 6, 6, 6)
P_BETA = (0.3, 0.25, -0.22, -0.19, 0.27, -0.17, -0.25)
P_INTERCEPT = 3.0


class ScenarioId(StrEnum):
    """Benchmark scenario identifiers."""

    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    N4 = "N4"
    N5 = "N5"
    N6 = "N6"
    N7 = "N7"
    N8 = "N8"
    N9 = "N9"
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"
    P1 = "P1"
    P2 = "P2"


SUPPORT_SIZE: dict[ScenarioId, int] = {
    ScenarioId.N1: 1,
    ScenarioId.N2: 8,
    ScenarioId.N3: 8,
    ScenarioId.N4: 14,
    ScenarioId.N5: 20,
    ScenarioId.N6: 15,
    ScenarioId.N7: 15,
    ScenarioId.N8: 10,
    ScenarioId.N9: 10,
    ScenarioId.B1: 7,
    ScenarioId.B2: 10,
    ScenarioId.B3: HUB_SIZE - 1,
    ScenarioId.P1: 7,
    ScenarioId.P2: 7,
}

_MIN_K: dict[ScenarioId, int] = {
    ScenarioId.B2: 105,
    ScenarioId.B3: 2 * HUB_SIZE,
}


def family_of(scenario: ScenarioId) -> FamilyId:
    """Response family of a scenario."""
    return {"N": FamilyId.NORMAL, "B": FamilyId.BINOMIAL, "P": FamilyId.POISSON}[
        scenario.value[0]
    ]


class ScenarioSpec(BaseModel):
    """One scenario at a given size, with its seed and replication count.

    ``N`` defaults to 100 for normal scenarios and 120 otherwise.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: ScenarioId
    N: int | None = Field(default=None, ge=5)  # noqa: N815
    K: int = Field(default=1000, ge=1)  # noqa: N815
    rng_seed: int = Field(default=1, ge=0, lt=2**64)
    replications: int = Field(default=30, ge=1)

    @model_validator(mode="after")
    def _check_width(self) -> "ScenarioSpec":
        needed = max(SUPPORT_SIZE[self.id], _MIN_K.get(self.id, 0))
        if self.K < needed:
            raise ValueError(f"scenario {self.id} needs K >= {needed}, got {self.K}")
        if self.id is ScenarioId.B3 and self.K % HUB_SIZE:
            raise ValueError(f"scenario B3 needs K divisible by {HUB_SIZE}")
        return self

    @property
    def n(self) -> int:
        """Sample size actually used."""
        if self.N is not None:
            return self.N
        return 100 if family_of(self.id) is FamilyId.NORMAL else 120

    @property
    def L(self) -> int:  # noqa: N802
        """Number of true predictors."""
        return SUPPORT_SIZE[self.id]


def _uniform(rng: np.random.Generator, n: int, k: int) -> FloatArray:
    return rng.uniform(-1.0, 1.0, size=(n, k))


def _ar1(
    rng: np.random.Generator, n: int, width: int, rho: float = AR_RHO
) -> FloatArray:
    """Unit-variance Gaussian columns with corr(Z_i, Z_j) = rho^|i-j|."""
    cov = linalg.toeplitz(rho ** np.arange(width))
    return rng.multivariate_normal(np.zeros(width), cov, size=n, method="cholesky")


def _compound_symmetry(
    rng: np.random.Generator, n: int, width: int, diagonal: float, common: float
) -> FloatArray:
    cov = diagonal * np.eye(width) + common * np.ones((width, width))
    return rng.multivariate_normal(np.zeros(width), cov, size=n, method="cholesky")


def _perturbed_pairs(rng: np.random.Generator, Z: FloatArray) -> None:  # noqa: N803
    """Z2 = Z1 + d, Z3 = -2 Z1 + d, Z4 = -Z1 + d and Z6 = -Z5 + d, in place."""
    n = Z.shape[0]
    noise = rng.normal(0.0, PERTURBATION_SD, size=(n, 4))
    Z[:, 1] = Z[:, 0] + noise[:, 0]
    Z[:, 2] = -2.0 * Z[:, 0] + noise[:, 1]
    Z[:, 3] = -Z[:, 0] + noise[:, 2]
    Z[:, 5] = -Z[:, 4] + noise[:, 3]


def _signed_beta(values: tuple[int, ...], negative: int) -> FloatArray:
    beta = np.asarray(values, dtype=np.float64)
    beta[:negative] *= -1.0
    return beta


# Generators map (rng, n, k) to (y, Z, truth).
_Generated = tuple[FloatArray, FloatArray, frozenset[int]]


def _linear_normal(
    Z: FloatArray,  # noqa: N803
    beta: FloatArray,
    rng: np.random.Generator,
    noise_sd: float = NOISE_SD,
) -> _Generated:
    support = len(beta)
    y = Z[:, :support] @ beta + rng.normal(0.0, noise_sd, size=Z.shape[0])
    return y, Z, frozenset(range(support))


def _n1(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _linear_normal(_uniform(rng, n, k), np.ones(1), rng)


def _n2(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _linear_normal(_uniform(rng, n, k), np.ones(8), rng, N2_NOISE_SD)


def _n3(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    _perturbed_pairs(rng, Z)
    return _linear_normal(Z, np.ones(8), rng)


def _n4(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    Z[:, 1:10] = _compound_symmetry(rng, n, 9, diagonal=0.01, common=0.05)
    return _linear_normal(Z, np.ones(14), rng)


def _n5(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    Z[:, :20] = _ar1(rng, n, 20)
    return _linear_normal(Z, np.ones(20), rng)


def _n6(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    return _linear_normal(Z, rng.normal(0.0, 1.0, size=15), rng)


def _n7(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _linear_normal(_uniform(rng, n, k), _signed_beta(N7_BETA, 0), rng)


def _n8(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _linear_normal(_uniform(rng, n, k), _signed_beta(N8_BETA, 4), rng)


def _n9(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _linear_normal(_uniform(rng, n, k), _signed_beta(N9_BETA, 4), rng)


def _bernoulli(rng: np.random.Generator, eta: FloatArray) -> FloatArray:
    return rng.binomial(1, special.expit(eta)).astype(np.float64)


def _b1(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    _perturbed_pairs(rng, Z)
    eta = 2.0 * (Z[:, 2] + Z[:, 5] + Z[:, 6])
    return _bernoulli(rng, eta), Z, frozenset(range(7))


def _b2(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    Z[:, 0:5] = _ar1(rng, n, 5)
    Z[:, 100:105] = _ar1(rng, n, 5)
    eta = 2.0 * (Z[:, 0] + Z[:, 100])
    return _bernoulli(rng, eta), Z, frozenset([*range(5), *range(100, 105)])


def _b3(rng: np.random.Generator, n: int, k: int) -> _Generated:
    """Hubs of correlated Gaussian nodes; the first node becomes the response."""
    hubs = [
        _compound_symmetry(rng, n, HUB_SIZE, 1.0 - HUB_CORRELATION, HUB_CORRELATION)
        for _ in range(k // HUB_SIZE)
    ]
    nodes = np.hstack(hubs)
    Z = nodes[:, 1:]  # noqa: N806
    eta = HUB_COEFFICIENT * Z[:, : HUB_SIZE - 1].sum(axis=1)
    return _bernoulli(rng, eta), Z, frozenset(range(HUB_SIZE - 1))


def _poisson(rng: np.random.Generator, Z: FloatArray) -> _Generated:  # noqa: N803
    eta = P_INTERCEPT + Z[:, : len(P_BETA)] @ np.asarray(P_BETA)
    y = rng.poisson(np.exp(eta)).astype(np.float64)
    return y, Z, frozenset(range(len(P_BETA)))


def _p1(rng: np.random.Generator, n: int, k: int) -> _Generated:
    return _poisson(rng, _uniform(rng, n, k))


def _p2(rng: np.random.Generator, n: int, k: int) -> _Generated:
    Z = _uniform(rng, n, k)  # noqa: N806
    Z[:, :5] = _ar1(rng, n, 5)
    return _poisson(rng, Z)


_GENERATORS: dict[ScenarioId, Callable[[np.random.Generator, int, int], _Generated]] = {
    ScenarioId.N1: _n1,
    ScenarioId.N2: _n2,
    ScenarioId.N3: _n3,
    ScenarioId.N4: _n4,
    ScenarioId.N5: _n5,
    ScenarioId.N6: _n6,
    ScenarioId.N7: _n7,
    ScenarioId.N8: _n8,
    ScenarioId.N9: _n9,
    ScenarioId.B1: _b1,
    ScenarioId.B2: _b2,
    ScenarioId.B3: _b3,
    ScenarioId.P1: _p1,
    ScenarioId.P2: _p2,
}


def generate(
    spec: ScenarioSpec, replication_index: int
) -> tuple[Dataset, frozenset[int]]:
    """Dataset and true support of replication ``replication_index``.

    The random stream depends only on (rng_seed, replication_index).
    """
    if replication_index < 0:
        raise ValueError(f"replication_index must be >= 0, got {replication_index}")
    rng = make_rng(child_seed(spec.rng_seed, replication_index))
    n = spec.n
    y, Z, truth = _GENERATORS[spec.id](rng, n, spec.K)  # noqa: N806
    dataset = Dataset(
        y=y,
        X=np.ones((n, 1)),
        Z=Z,
        spec=FamilySpec.create(family_of(spec.id), n),
        x_names=("intercept",),
    )
    return dataset, truth
