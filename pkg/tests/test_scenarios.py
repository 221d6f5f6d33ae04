"""Tests for the synthetic benchmark scenarios."""

import numpy as np
from numpy.testing import assert_array_equal
import pytest

from src.models.families import FamilyId
from src.simulation.scenarios import (
    SUPPORT_SIZE,
    ScenarioId,
    ScenarioSpec,
    family_of,
    generate,
)


@pytest.mark.parametrize(
    ("scenario", "k"),
    [
        *[(s, 40) for s in ScenarioId if s not in (ScenarioId.B2, ScenarioId.B3)],
        (ScenarioId.B2, 110),
        (ScenarioId.B3, 40),
    ],
)
def test_shapes_and_truth(scenario, k):
    spec = ScenarioSpec(id=scenario, K=k, N=30)
    data, truth = generate(spec, 0)
    expected_k = k - 1 if scenario is ScenarioId.B3 else k
    assert data.Z.shape == (30, expected_k)
    assert data.x_names == ("intercept",)
    assert data.spec.family_id is family_of(scenario)
    assert len(truth) == SUPPORT_SIZE[scenario]
    assert all(0 <= t < expected_k for t in truth)
    if data.spec.family_id is FamilyId.BINOMIAL:
        assert set(np.unique(data.y)) <= {0.0, 1.0}
    if data.spec.family_id is FamilyId.POISSON:
        assert np.all(data.y >= 0.0)


def test_default_sample_sizes():
    assert ScenarioSpec(id="N1", K=10).n == 100
    assert ScenarioSpec(id="B1", K=10).n == 120
    assert ScenarioSpec(id="P2", K=10).n == 120
    assert ScenarioSpec(id="N1", K=10, N=55).n == 55


def test_replications_are_deterministic_and_distinct():
    spec = ScenarioSpec(id="N3", K=20, rng_seed=9)
    first, _ = generate(spec, 2)
    again, _ = generate(spec, 2)
    other, _ = generate(spec, 3)
    assert_array_equal(first.Z, again.Z)
    assert_array_equal(first.y, again.y)
    assert not np.array_equal(first.Z, other.Z)


def test_n1_response_follows_first_column():
    data, truth = generate(ScenarioSpec(id="N1", K=5, N=200), 0)
    assert truth == frozenset({0})
    residual = data.y - data.Z[:, 0]
    assert np.std(residual) == pytest.approx(0.1, rel=0.2)


def test_n3_perturbed_pairs_are_correlated():
    data, _ = generate(ScenarioSpec(id="N3", K=10, N=400), 0)
    corr = np.corrcoef(data.Z, rowvar=False)
    assert corr[0, 1] > 0.8
    assert corr[0, 2] < -0.9
    assert corr[4, 5] < -0.8


def test_n8_signs():
    data, _ = generate(ScenarioSpec(id="N8", K=12, N=400), 0)
    fit = np.linalg.lstsq(data.Z[:, :10], data.y, rcond=None)[0]
    assert np.all(fit[:4] < 0.0)
    assert np.all(fit[4:] > 0.0)


@pytest.mark.parametrize(
    "fields",
    [
        {"id": "N2", "K": 5},
        {"id": "B2", "K": 100},
        {"id": "B3", "K": 45},
        {"id": "N1", "K": 10, "N": 2},
        {"id": "Q1", "K": 10},
    ],
)
def test_invalid_specs(fields):
    with pytest.raises(ValueError):
        ScenarioSpec(**fields)


def test_negative_replication_index():
    with pytest.raises(ValueError, match="replication_index"):
        generate(ScenarioSpec(id="N1", K=5), -1)
