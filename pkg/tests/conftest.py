"""Shared fixtures: small datasets with a known support for every family."""

import numpy as np
import pytest

from src.models.families import FamilyId, FamilySpec
from src.models.structures import Dataset


def make_dataset(y, Z, family=FamilyId.NORMAL, X=None, weights=None, offset=None):
    n = len(y)
    X = np.ones((n, 1)) if X is None else X
    x_names = ("intercept",) if X.shape[1] == 1 else ()
    return Dataset(
        y=y,
        X=X,
        Z=Z,
        spec=FamilySpec.create(family, n, weights),
        x_names=x_names,
        offset=offset,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture()
def normal_data(rng):
    """y = 1 + 2 Z1 - 1.5 Z4 + noise, eight putative columns."""
    n, k = 60, 8
    Z = rng.uniform(-1.0, 1.0, size=(n, k))
    y = 1.0 + 2.0 * Z[:, 0] - 1.5 * Z[:, 3] + rng.normal(0.0, 0.3, size=n)
    return make_dataset(y, Z)


@pytest.fixture()
def binomial_data(rng):
    """logit p = 0.5 + 2 Z1 - 2 Z3, ten putative columns."""
    n, k = 300, 10
    Z = rng.normal(size=(n, k))
    eta = 0.5 + 2.0 * Z[:, 0] - 2.0 * Z[:, 2]
    y = rng.binomial(1, 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return make_dataset(y, Z, FamilyId.BINOMIAL)


@pytest.fixture()
def poisson_data(rng):
    """log lambda = 1 + 0.8 Z1 - 0.6 Z2, ten putative columns."""
    n, k = 150, 10
    Z = rng.normal(size=(n, k))
    eta = 1.0 + 0.8 * Z[:, 0] - 0.6 * Z[:, 1]
    y = rng.poisson(np.exp(eta)).astype(float)
    return make_dataset(y, Z, FamilyId.POISSON)


@pytest.fixture()
def write_csv(tmp_path):
    """Write rows (header first) to a CSV file and return its path."""

    def _write(rows, name="data.csv"):
        path = tmp_path / name
        path.write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")
        return path

    return _write
