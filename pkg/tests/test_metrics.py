import math

import numpy as np
import pytest

import splidar as sp
from conftest import cube_from_counts


class TestSre:
    def test_perfect_match_is_inf(self):
        x = np.array([1.0, 2.0])
        assert sp.sre(x, x.copy()) == math.inf

    def test_equal_norms_zero_db(self):
        assert sp.sre(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 0.0

    def test_hand_value(self):
        assert sp.sre(np.array([3.0, 4.0]),
                      np.array([3.0, 4.5])) == pytest.approx(20.0)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            sp.sre(np.zeros(3), np.ones(3))

    def test_joint_scaling_invariance(self, rng):
        x = rng.standard_normal((4, 4))
        xh = x + 0.1 * rng.standard_normal((4, 4))
        base = sp.sre(x, xh)
        for c in (-3.0, 0.25, 7.0):
            assert sp.sre(c * x, c * xh) == pytest.approx(base, rel=1e-12)

    def test_mask_restriction(self):
        x = np.array([[1.0, 100.0]])
        xh = np.array([[1.0, 0.0]])
        mask = np.array([[True, False]])
        assert sp.sre(x, xh, mask) == math.inf


class TestNbias:
    def test_zero_for_match(self):
        x = np.array([2.0, 2.0])
        assert sp.nbias(x, x.copy()) == 0.0

    def test_constant_shift(self):
        assert sp.nbias(np.full(4, 2.0), np.full(4, 1.8)) == pytest.approx(0.1)

    def test_permutation_preserves_mean(self):
        assert sp.nbias(np.array([1.0, 3.0]), np.array([3.0, 1.0])) == 0.0

    def test_joint_permutation_invariance(self, rng):
        x = rng.uniform(1, 2, 16)
        xh = rng.uniform(1, 2, 16)
        base = sp.nbias(x, xh)
        perm = rng.permutation(16)
        assert sp.nbias(x[perm], xh[perm]) == pytest.approx(base, rel=1e-12)

    def test_zero_mean_rejected(self):
        with pytest.raises(ValueError):
            sp.nbias(np.array([-1.0, 1.0]), np.ones(2))


class TestRatios:
    def test_sbr(self):
        assert sp.sbr(1.0, 1000.0, 1.0) == 1000.0
        with pytest.raises(ValueError):
            sp.sbr(1.0, 1000.0, 0.0)

    def test_snr(self):
        assert sp.snr(1.0, 1000.0, 1.0) == pytest.approx(1000.0 / math.sqrt(1001.0))
        assert sp.snr(1.0, 1000.0, 1.0) == pytest.approx(31.61, abs=0.01)

    def test_attenuation_lengths(self):
        assert sp.attenuation_lengths(4.0, 2.0) == 8.0


class TestPctNonempty:
    def test_all_zero(self):
        cube = cube_from_counts(np.zeros((2, 2, 4), dtype=np.uint32))
        assert sp.pct_nonempty(cube) == 0.0

    def test_full(self):
        cube = cube_from_counts(np.ones((2, 2, 4), dtype=np.uint32))
        assert sp.pct_nonempty(cube) == 100.0

    def test_three_quarters(self):
        counts = np.zeros((2, 2, 4), dtype=np.uint32)
        counts[0, 0, 0] = counts[0, 1, 1] = counts[1, 0, 2] = 1
        assert sp.pct_nonempty(cube_from_counts(counts)) == 75.0


class TestPerLevel:
    def test_groups_by_reference_level(self):
        truth_refl = np.repeat(np.array([[0.1, 0.5]]), 3, axis=0)
        truth_depth = np.full((3, 2), 40.0)
        est_refl = truth_refl * 1.1
        est_depth = truth_depth + 1.0
        rows = sp.per_level_metrics(truth_depth, truth_refl, est_depth,
                                    est_refl, amplitude=1000.0,
                                    background=1.0)
        assert [r.level for r in rows] == [0.1, 0.5]
        assert [r.sbr for r in rows] == [pytest.approx(100.0),
                                         pytest.approx(500.0)]
        assert all(r.n_pixels == 3 for r in rows)
        assert rows[0].nbias_refl == pytest.approx(0.1)

    def test_continuous_reference_gives_no_levels(self, rng):
        img = rng.uniform(0, 1, (10, 10))
        rows = sp.per_level_metrics(img, img, img, img, 1000.0, 1.0,
                                    max_levels=8)
        assert rows == []


class TestReportFiles:
    def test_report_and_series_round_trip(self, tmp_path):
        truth_refl = np.repeat(np.array([[0.1, 0.5]]), 2, axis=0)
        truth_depth = np.full((2, 2), 10.0)
        rows = sp.per_level_metrics(truth_depth, truth_refl, truth_depth,
                                    truth_refl, 1000.0, 1.0)
        report = sp.EvalReport(sre_depth=math.inf, sre_refl=math.inf,
                               nbias_depth=0.0, nbias_refl=0.0,
                               sbr=300.0, snr=17.0, al=math.nan,
                               pct_nonempty=100.0)
        path = tmp_path / "report.csv"
        sp.write_report_csv(path, report, rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == sp.metrics.REPORT_HEADER
        assert len(lines) == 4  # header + global + 2 levels
        assert lines[1].startswith("all,")
        assert "inf" in lines[1]
        series = tmp_path / "series.csv"
        sp.write_series_csv(series, rows, tacq=0.5)
        s_lines = series.read_text().strip().splitlines()
        assert s_lines[0] == sp.metrics.SERIES_HEADER
        assert s_lines[1].split(",")[1] == "0.5"
