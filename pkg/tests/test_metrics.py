import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrecon.errors import InvalidArgumentError, UndefinedMetricError
from specrecon.metrics_eval import (
    CSV_FIELDS,
    EvalReport,
    make_schedules,
    mse,
    parse_levels,
    read_report,
    run_benchmark,
    spectral_angle,
)
from specrecon.pipeline import ReconConfig
from specrecon.scenes import demo_scenes
from specrecon.spectral_model import HyperCube


def cube(a):
    a = np.asarray(a, dtype=float)
    return HyperCube(a.reshape(1, -1, a.shape[-1]))


class TestMSE:
    def test_identical(self, rng):
        a = HyperCube(rng.uniform(size=(3, 4, 5)))
        assert mse(a, a) == 0.0

    def test_unit_offset(self):
        assert mse(HyperCube(np.zeros((2, 2, 3))), HyperCube(np.ones((2, 2, 3)))) == 1.0

    def test_hand_case(self):
        assert mse(cube([[0, 0], [1, 1]]), cube([[1, 1], [1, 1]])) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            mse(HyperCube(np.zeros((2, 2, 3))), HyperCube(np.zeros((2, 2, 4))))


class TestSpectralAngle:
    def test_scaled_estimate(self, rng):
        a = rng.uniform(0.1, 1, size=(3, 3, 6))
        assert spectral_angle(HyperCube(a), HyperCube(2 * a)) == pytest.approx(0.0, abs=1e-7)

    def test_zero_estimate_scores_pi(self):
        assert spectral_angle(cube([[1, 2]]), cube([[0, 0]])) == math.pi

    def test_orthogonal(self):
        assert spectral_angle(cube([[1, 0]]), cube([[0, 1]])) == pytest.approx(math.pi / 2, rel=1e-15)

    def test_zero_reference_skipped(self):
        assert spectral_angle(cube([[0, 0], [1, 0]]), cube([[5, 1], [0, 1]])) == pytest.approx(math.pi / 2)

    def test_all_zero_reference(self):
        with pytest.raises(UndefinedMetricError):
            spectral_angle(cube([[0, 0]]), cube([[1, 1]]))

    def test_clamped_argument(self):
        v = np.array([[0.1, 0.2, 0.3]])
        assert spectral_angle(cube(v), cube(v * (1 + 1e-16))) == 0.0

    @given(seed=st.integers(0, 10**6), a=st.floats(1e-3, 1e3))
    @settings(max_examples=40, deadline=None)
    def test_common_scale_invariance(self, seed, a):
        rng = np.random.default_rng(seed)
        r, e = rng.uniform(0.01, 1, size=(2, 3, 4)), rng.uniform(0.01, 1, size=(2, 3, 4))
        base = spectral_angle(HyperCube(r), HyperCube(e))
        assert spectral_angle(HyperCube(a * r), HyperCube(a * e)) == pytest.approx(base, abs=1e-7)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        r, e = rng.uniform(size=(12, 4)), rng.uniform(size=(12, 4))
        perm = rng.permutation(12)
        assert spectral_angle(cube(r[perm]), cube(e[perm])) == pytest.approx(spectral_angle(cube(r), cube(e)), rel=1e-13)
        assert mse(cube(r[perm]), cube(e[perm])) == pytest.approx(mse(cube(r), cube(e)), rel=1e-13)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_range(self, seed):
        rng = np.random.default_rng(seed)
        sa = spectral_angle(cube(rng.normal(size=(5, 3))), cube(rng.normal(size=(5, 3))))
        assert 0 <= sa <= math.pi


class TestLevels:
    def test_parse(self):
        assert parse_levels("10, 100,inf") == [10.0, 100.0, math.inf]

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidArgumentError):
            parse_levels("10,0")

    def test_schedules(self):
        s = make_schedules([10, math.inf], [(10, 100)], 9)
        assert [x.bounds for x in s] == [(10, 10), (math.inf, math.inf), (10, 100)]


@pytest.fixture(scope="module")
def small_report(bank):
    scenes = demo_scenes(1, 64)
    return run_benchmark(scenes, bank, ["sp", "wf", "ssw", "epssw", "spre"],
                         make_schedules([10, 100, 1000, math.inf], [], 9), seeds=[0], timing=False)


class TestBenchmark:
    def test_grid_bookkeeping(self, small_report):
        assert len(small_report) == 20
        assert all(r.error is None for r in small_report.records)
        assert all(math.isnan(r.runtime_s) for r in small_report.records)

    def test_csv_schema_and_round_trip(self, small_report, tmp_path):
        path = tmp_path / "r.csv"
        text = small_report.to_csv(path)
        assert text.splitlines()[0] == ",".join(CSV_FIELDS)
        back = read_report(path)
        assert [r.mse for r in back.records] == [r.mse for r in small_report.records]
        assert back.records[-1].l_min == math.inf

    def test_noiseless_metrics_agree(self, small_report):
        sas = [small_report.lookup(m, math.inf, math.inf)["sa_mean"] for m in ("sp", "wf", "ssw", "epssw", "spre")]
        assert (max(sas) - min(sas)) / max(sas) < 0.1

    def test_deterministic(self, bank):
        args = (demo_scenes(1, 12), bank, ["sp", "spre"], make_schedules([10], [(10, 100)], 9))
        a = run_benchmark(*args, seeds=[0, 1], timing=False).to_csv()
        b = run_benchmark(*args, seeds=[0, 1], timing=False).to_csv()
        assert a == b

    def test_oracle_noise(self, bank):
        rep = run_benchmark(demo_scenes(1, 12), bank, ["wf"], make_schedules([100], [], 9), noise_source="oracle")
        assert rep.records[0].runtime_s > 0

    def test_failing_cell_is_recorded(self, bank):
        # a 3x3 scene is smaller than the 5x5 block: SSW fails, SP still runs
        rep = run_benchmark(demo_scenes(1, 3), bank, ["sp", "ssw"], make_schedules([100], [], 9))
        errs = {r.method: r.error for r in rep.records}
        assert errs["sp"] is None and "InvalidArgumentError" in errs["ssw"]
        assert len(rep.summary()) == 1

    def test_summary_statistics(self):
        from specrecon.metrics_eval import EvalRecord

        rep = EvalReport([EvalRecord("a", "sp", 10, 10, s, m, sa, 0.0)
                          for s, m, sa in [(0, 1.0, 0.1), (1, 3.0, 0.3)]]
                         + [EvalRecord("b", "sp", 10, 10, 0, 6.0, 0.6, 0.0)])
        row = rep.lookup("sp", 10, 10)
        assert row["mse_mean"] == 4.0 and row["mse_std"] == 2.0
        assert row["sa_mean"] == pytest.approx(0.4)

    def test_rejects_unknown_method(self, bank):
        with pytest.raises(InvalidArgumentError):
            run_benchmark(demo_scenes(1, 8), bank, ["nope"], make_schedules([10], [], 9))

    def test_plot(self, small_report, tmp_path):
        pytest.importorskip("matplotlib")
        from specrecon.metrics_eval import plot_summary

        path = tmp_path / "s.svg"
        plot_summary(small_report, path)
        assert path.read_text().lstrip().startswith("<?xml")
