import math
import warnings

import numpy as np
import pytest

from timber_reuse.errors import DegenerateFeatureError, MissingBaselineError, SchemaError, ValidationError
from timber_reuse.specimens import (
    Baseline,
    BaselineTable,
    MetricWeights,
    SpecimenRecord,
    build_features,
    compute_baselines,
    descriptive_stats,
    load_specimens,
    residual_performance,
    residual_performances,
)

HEADER = "id,group,orientation,modulus_gpa,max_stress_mpa\n"

BASES = BaselineTable({"long": Baseline(10.59, 113.31, 10), "cross": Baseline(1.98, 37.38, 10)})


def _rec(i, group=0, orientation="long", E=10.0, s=100.0, **kw):
    return SpecimenRecord(f"S{i}", group, orientation, E, s, **kw)


class TestLoadSpecimens:
    def test_control_row(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER + "S01,0,long,10.59,113.31\n")
        (rec,) = load_specimens(path)
        assert (rec.id, rec.group, rec.orientation) == ("S01", 0, "long")
        assert rec.modulus == 10.59 and rec.max_stress == 113.31
        assert rec.density is None

    def test_header_only(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER)
        assert load_specimens(path) == []

    def test_group_out_of_range_cites_row(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER + "S01,0,long,10,100\nS02,3,long,10,100\n")
        with pytest.raises(ValidationError, match="row 3"):
            load_specimens(path)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("id,group,orientation,modulus_gpa\nS01,0,long,10\n")
        with pytest.raises(SchemaError, match="max_stress_mpa"):
            load_specimens(path)

    @pytest.mark.parametrize("row", ["S01,0,long,0,100", "S01,0,long,10,-1"])
    def test_non_positive_rejected(self, tmp_path, row):
        path = tmp_path / "a.csv"
        path.write_text(HEADER + row + "\n")
        with pytest.raises(ValidationError):
            load_specimens(path)

    def test_bad_orientation(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER + "S01,0,diagonal,10,100\n")
        with pytest.raises(ValidationError, match="orientation"):
            load_specimens(path)

    def test_optional_columns_and_order(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(
            "id,group,orientation,modulus_gpa,max_stress_mpa,density_kg_m3\n"
            "B,1,cross,1.5,30,\nA,0,long,10,100,530.5\n"
        )
        recs = load_specimens(path)
        assert [r.id for r in recs] == ["B", "A"]
        assert recs[0].density is None and recs[1].density == 530.5


class TestBaselines:
    def test_single_control(self):
        table = compute_baselines([_rec(1, E=10.59, s=113.31)])
        assert table["long"].E_0 == 10.59 and table["long"].sigma_0 == 113.31

    def test_mean_of_two(self):
        table = compute_baselines([_rec(1, E=10.0), _rec(2, E=11.18)])
        assert table["long"].E_0 == pytest.approx(10.59, abs=1e-12)

    def test_controls_only_count(self):
        table = compute_baselines([_rec(1, E=10.0), _rec(2, group=2, E=2.0)])
        assert table["long"].E_0 == 10.0 and table["long"].n_controls == 1

    def test_missing_cross_controls(self):
        with pytest.raises(MissingBaselineError, match="cross"):
            compute_baselines([_rec(1), _rec(2, group=1, orientation="cross", E=1.5, s=30)])

    def test_lookup_of_absent_orientation(self):
        with pytest.raises(MissingBaselineError):
            BaselineTable({})["long"]


class TestResidualPerformance:
    def test_two_cycle_long(self):
        r = residual_performance(_rec(1, 2, "long", 8.36, 95.01), BASES)
        assert r == pytest.approx(0.799, abs=1e-3)

    def test_two_cycle_cross(self):
        r = residual_performance(_rec(1, 2, "cross", 1.58, 34.38), BASES)
        assert r == pytest.approx(0.822, abs=1e-3)

    def test_control_at_baseline_is_exactly_one(self):
        assert residual_performance(_rec(1, 0, "long", 10.59, 113.31), BASES) == 1.0

    def test_custom_weights(self):
        r = residual_performance(_rec(1, 1, "long", 10.59, 56.655), BASES, MetricWeights(0.5, 0.5))
        assert r == pytest.approx(0.75)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            MetricWeights(0.8, 0.3)

    def test_batch_uses_computed_baselines(self):
        recs = [_rec(1, E=10, s=100), _rec(2, E=12, s=120), _rec(3, 2, E=5.5, s=55)]
        R = residual_performances(recs)
        np.testing.assert_allclose(R, [10 / 11, 12 / 11, 0.5])


class TestFeatures:
    def test_population_sd_gives_unit_scores(self):
        recs = [_rec(1, 0), _rec(2, 2, "cross")]
        fm = build_features(recs, ["group"])
        np.testing.assert_allclose(fm.X[:, 0], [-1.0, 1.0])

    def test_all_cross_orientation_degenerate(self):
        recs = [_rec(1, 0, "cross"), _rec(2, 1, "cross")]
        with pytest.raises(DegenerateFeatureError, match="orientation"):
            build_features(recs, ["group", "orientation"])

    def test_five_features_standardized(self, replica_records):
        fm = build_features(replica_records, ["group", "orientation", "density", "moisture", "size"])
        assert fm.X.shape == (30, 5)
        np.testing.assert_allclose(fm.X.mean(axis=0), 0, atol=1e-10)
        np.testing.assert_allclose(fm.X.std(axis=0), 1, atol=1e-10)

    def test_missing_feature_names_record(self):
        recs = [_rec(1, 0), _rec(2, 1, density=500.0)]
        with pytest.raises(ValidationError, match="S1"):
            build_features(recs, ["density"])

    def test_transform_roundtrip(self, replica_records):
        fm = build_features(replica_records)
        np.testing.assert_allclose(fm.transform(fm.raw()), fm.X, atol=1e-12)

    def test_orientation_encoding(self):
        assert _rec(1, orientation="long").feature("orientation") == 0.0
        assert _rec(1, orientation="cross").feature("orientation") == 1.0


class TestDescriptiveStats:
    def test_two_values(self):
        (row,) = descriptive_stats({2: [0.7, 0.9]})
        assert row.mean == pytest.approx(0.8) and row.sd == pytest.approx(0.1414, abs=1e-4)

    def test_single_member_flagged(self):
        with pytest.warns(UserWarning, match="single member"):
            (row,) = descriptive_stats({1: [0.9]})
        assert row.mean == 0.9 and row.sd == 0.0 and row.single_member

    def test_table_means_reproduced(self):
        fixture = {0: [0.9, 1.1], 1: [0.902, 1.002], 2: [0.648, 0.848]}
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rows = descriptive_stats(fixture)
        assert [round(r.mean, 3) for r in rows] == [1.0, 0.952, 0.748]
        assert [r.name for r in rows] == ["Original", "Set1", "Set2"]

    def test_record_validation(self):
        with pytest.raises(ValidationError):
            SpecimenRecord("x", 0, "long", math.nan, 1.0)
