"""Tests for assembling a Dataset from a CSV file."""

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from src.data_functions.load import ColumnRole
from src.models.families import FamilyId
from src.pipelines.data_pipeline import INTERCEPT, run_data_pipeline
from src.utils.exceptions import SchemaError


@pytest.fixture()
def csv_path(write_csv):
    return write_csv(
        [
            ["subject", "y", "age", "a", "b"],
            ["s1", 1.0, 40, 0.5, 2.0],
            ["s2", 2.5, 51, -0.2, 1.0],
            ["s3", 0.7, 38, 1.1, 0.0],
            ["s4", 1.9, 60, 0.3, 3.0],
        ]
    )


SCHEMA = {"subject": ColumnRole.ID, "y": ColumnRole.RESPONSE, "age": "locked_in"}


def test_roles_map_to_design_blocks(csv_path):
    prepared = run_data_pipeline(csv_path, {**SCHEMA, "age": ColumnRole.LOCKED_IN})
    data = prepared.dataset
    assert data.x_names == (INTERCEPT, "age")
    assert data.z_names == ("a", "b")
    assert_array_equal(data.X[:, 0], np.ones(4))
    assert_array_equal(data.X[:, 1], [40.0, 51.0, 38.0, 60.0])
    assert_array_equal(data.y, [1.0, 2.5, 0.7, 1.9])
    assert prepared.scaling is None


def test_schema_from_yaml_file(csv_path, tmp_path):
    schema = tmp_path / "schema.yaml"
    schema.write_text("subject: id\ny: response\nage: ignore\n")
    data = run_data_pipeline(csv_path, schema, add_intercept=False).dataset
    assert data.J == 0
    assert data.z_names == ("a", "b")


def test_standardize_returns_scaling(csv_path):
    schema = {"subject": ColumnRole.ID, "y": ColumnRole.RESPONSE}
    prepared = run_data_pipeline(csv_path, schema, standardize=True)
    assert set(prepared.scaling.scales) == {"age", "a", "b"}
    assert_allclose(prepared.dataset.Z.std(axis=0, ddof=1), np.ones(3))


def test_binomial_counts_become_proportions(write_csv):
    path = write_csv(
        [
            ["hits", "trials", "a"],
            [3, 4, 0.1],
            [0, 2, 0.4],
            [5, 5, -0.3],
        ]
    )
    schema = {"hits": ColumnRole.RESPONSE, "trials": ColumnRole.WEIGHTS}
    data = run_data_pipeline(path, schema, family="binomial").dataset
    assert data.spec.family_id is FamilyId.BINOMIAL
    assert_allclose(data.y, [0.75, 0.0, 1.0])
    assert data.z_names == ("a",)


def test_survival_layout_fits_poisson(write_csv):
    path = write_csv(
        [
            ["t", "d", "a"],
            [2.0, 1, 0.0],
            [3.0, 1, 1.0],
            [3.0, 0, 1.0],
            [5.0, 1, 0.0],
        ]
    )
    schema = {"t": ColumnRole.TIME, "d": ColumnRole.EVENT}
    data = run_data_pipeline(path, schema, family="normal").dataset
    assert data.spec.family_id is FamilyId.POISSON
    assert data.z_names == ("a",)
    assert data.y.sum() == 3.0


def test_survival_flag_needs_time_and_event(csv_path):
    with pytest.raises(SchemaError, match="time and event"):
        run_data_pipeline(csv_path, SCHEMA, survival=True)


def test_compositional_reference_is_dropped(write_csv):
    path = write_csv(
        [["y", "a", "b", "ref"], [0.1, 2, 1, 1], [0.4, 0, 1, 3], [0.2, 1, 4, 2]]
    )
    prepared = run_data_pipeline(
        path, {"y": ColumnRole.RESPONSE}, compositional_reference="ref"
    )
    assert prepared.dataset.z_names == ("a", "b")
    assert_allclose(prepared.dataset.Z[0], [np.log(2.0), 0.0])
