"""Tests for standardization, log ratios and the survival expansion."""

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import polars as pl
import pytest

from src.data_functions.load import ColumnRole, RawTable
from src.data_functions.process import (
    Grouping,
    SurvivalRecord,
    back_transform_coefficients,
    compositional_logratio,
    records_from_table,
    standardize_putative,
    survival_to_poisson,
)
from src.models.families import FamilyId
from src.utils.exceptions import (
    ConstantColumnError,
    NoEventsError,
    SchemaError,
    ValidationError,
)


def _table(columns, roles=None):
    frame = pl.DataFrame(columns)
    roles = roles or {}
    return RawTable(
        frame=frame,
        roles={c: roles.get(c, ColumnRole.PUTATIVE) for c in frame.columns},
    )


class TestStandardize:
    def test_unit_sample_sd(self):
        table = _table(
            {
                "y": [1.0, 2.0, 3.0, 4.0],
                "a": [1.0, 3.0, 5.0, 11.0],
                "b": [2.0, 0.0, 1.0, 1.0],
            },
            {"y": ColumnRole.RESPONSE},
        )
        scaled, record = standardize_putative(table)
        for c in ("a", "b"):
            values = scaled.frame[c].to_numpy()
            assert_allclose(values.mean(), 0.0, atol=1e-12)
            assert_allclose(values.std(ddof=1), 1.0)
        assert scaled.frame["y"].to_list() == [1.0, 2.0, 3.0, 4.0]
        assert record.means["a"] == 5.0

    def test_constant_column(self):
        table = _table(
            {"y": [1.0, 2.0, 3.0], "c": [4.0, 4.0, 4.0]}, {"y": ColumnRole.RESPONSE}
        )
        with pytest.raises(ConstantColumnError) as info:
            standardize_putative(table)
        assert info.value.column == "c"

    def test_back_transform_preserves_predictions(self, rng):
        raw = rng.normal(3.0, 2.0, size=(20, 2))
        table = _table(
            {"y": rng.normal(size=20), "a": raw[:, 0], "b": raw[:, 1]},
            {"y": ColumnRole.RESPONSE},
        )
        scaled, record = standardize_putative(table)
        fitted = {"intercept": 0.7, "a": 1.5, "b": -0.4}
        original = back_transform_coefficients(fitted, record)
        on_scaled = (
            fitted["intercept"]
            + fitted["a"] * scaled.frame["a"].to_numpy()
            + fitted["b"] * scaled.frame["b"].to_numpy()
        )
        on_raw = original["intercept"] + raw @ [original["a"], original["b"]]
        assert_allclose(on_raw, on_scaled)

    def test_back_transform_needs_intercept(self):
        table = _table(
            {"y": [1.0, 2.0, 3.0], "a": [1.0, 2.0, 4.0]}, {"y": ColumnRole.RESPONSE}
        )
        _, record = standardize_putative(table)
        with pytest.raises(ValidationError, match="intercept"):
            back_transform_coefficients({"a": 1.0}, record, intercept=None)


class TestLogRatio:
    def test_known_values(self):
        table = _table(
            {"y": [0.0, 1.0], "a": [2.0, 0.0], "b": [1.0, 1.0], "ref": [1.0, 3.0]},
            {"y": ColumnRole.RESPONSE},
        )
        out = compositional_logratio(table, "ref", zero_replacement=0.5)
        assert out.frame.columns == ["y", "a", "b"]
        assert_allclose(out.frame["a"].to_numpy(), [np.log(2.0), np.log(0.5 / 3.0)])
        assert_allclose(out.frame["b"].to_numpy(), [0.0, np.log(1.0 / 3.0)])
        assert out.roles["a"] is ColumnRole.PUTATIVE

    def test_reference_must_be_compositional(self):
        table = _table({"y": [0.0, 1.0], "a": [1.0, 2.0]}, {"y": ColumnRole.RESPONSE})
        with pytest.raises(SchemaError, match="reference"):
            compositional_logratio(table, "y")

    def test_negative_counts(self):
        table = _table(
            {"y": [0.0, 1.0], "a": [1.0, -2.0], "r": [1.0, 1.0]},
            {"y": ColumnRole.RESPONSE},
        )
        with pytest.raises(ValidationError, match="negative"):
            compositional_logratio(table, "r")


class TestSurvivalToPoisson:
    @pytest.fixture()
    def records(self):
        return [
            SurvivalRecord(2.0, True, (0.0,)),
            SurvivalRecord(3.0, True, (1.0,)),
            SurvivalRecord(3.0, False, (1.0,)),
            SurvivalRecord(5.0, True, (0.0,)),
        ]

    def test_pattern_grouping(self, records):
        data = survival_to_poisson(records, ["x"])
        assert data.spec.family_id is FamilyId.POISSON
        assert data.x_names == ("interval_1", "interval_2", "interval_3")
        assert data.z_names == ("x",)
        assert_array_equal(data.y, [1.0, 0.0, 0.0, 1.0, 1.0])
        assert_allclose(np.exp(data.offset_vector), [2.0, 2.0, 1.0, 2.0, 1.0])
        assert_array_equal(data.Z[:, 0], [0.0, 1.0, 0.0, 1.0, 0.0])
        assert_array_equal(data.X.argmax(axis=1), [0, 0, 1, 1, 2])

    def test_subject_grouping(self, records):
        data = survival_to_poisson(records, ["x"], grouping=Grouping.SUBJECT)
        assert data.N == 8
        assert data.y.sum() == 3.0
        assert_allclose(data.offset_vector, np.zeros(8))

    def test_locked_in_covariates_go_to_x(self, records):
        data = survival_to_poisson(records, ["x"], locked_in=["x"])
        assert data.x_names[-1] == "x"
        assert data.K == 0

    def test_no_events(self):
        records = [SurvivalRecord(1.0, False, ()), SurvivalRecord(2.0, False, ())]
        with pytest.raises(NoEventsError):
            survival_to_poisson(records, [])

    def test_nonpositive_time(self):
        with pytest.raises(ValidationError, match="> 0"):
            SurvivalRecord(0.0, True, ())

    def test_records_from_table(self):
        table = _table(
            {"t": [1.0, 2.0], "d": [1.0, 0.0], "age": [50.0, 60.0], "g": [1.0, 2.0]},
            {"t": ColumnRole.TIME, "d": ColumnRole.EVENT, "age": ColumnRole.LOCKED_IN},
        )
        records, names = records_from_table(table)
        assert names == ["age", "g"]
        assert records[0] == SurvivalRecord(1.0, True, (50.0, 1.0))

    def test_event_must_be_binary(self):
        table = _table(
            {"t": [1.0, 2.0], "d": [1.0, 2.0]},
            {"t": ColumnRole.TIME, "d": ColumnRole.EVENT},
        )
        with pytest.raises(ValidationError, match="0 and 1"):
            records_from_table(table)
