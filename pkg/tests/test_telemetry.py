import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppasim.telemetry import (CHANNELS, LengthMismatch, MetricSample, MetricsHistory,
                              UnknownChannel, channel_index, mean_std, prediction_mse,
                              read_metrics_csv, rir, summarize, welch_pvalue,
                              write_metrics_csv)

finite = st.floats(0.0, 1e6, allow_nan=False, allow_infinity=False)


class TestMetricSample:
    def test_channel_order(self):
        assert CHANNELS == ("cpu", "ram", "net_in", "net_out", "custom")
        s = MetricSample(0, 0.0, 1, 2, 3, 4, 5)
        assert s.vector().tolist() == [1, 2, 3, 4, 5]

    def test_rejects_negative_and_nan(self):
        with pytest.raises(ValueError):
            MetricSample(0, 0.0, -1, 0, 0, 0, 0)
        with pytest.raises(ValueError):
            MetricSample(0, 0.0, 0, math.nan, 0, 0, 0)

    def test_from_vector_clips_negative_predictions(self):
        s = MetricSample.from_vector(3, 45.0, [-2.0, 1, 2, 3, 4])
        assert s.cpu == 0.0 and s.custom == 4.0

    def test_unknown_channel(self):
        with pytest.raises(UnknownChannel):
            channel_index("latency")


class TestRir:
    def test_examples(self):
        assert rir(500, 2000) == 0.25
        assert rir(0, 2000) == 0.0

    def test_undefined(self):
        assert math.isnan(rir(0, 0))

    @given(finite, st.floats(1.0, 1e6))
    def test_in_unit_interval(self, busy, requested):
        busy = min(busy, requested)
        assert 0.0 <= rir(requested - busy, requested) <= 1.0


class TestMse:
    def test_examples(self):
        assert prediction_mse([1, 2, 3], [1, 2, 3]) == 0.0
        assert prediction_mse(np.arange(5) + 2.0, np.arange(5)) == 4.0
        assert prediction_mse([1, 2], [3, 2]) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            prediction_mse([1, 2], [1])
        with pytest.raises(LengthMismatch):
            prediction_mse([], [])


class TestWelch:
    def test_identical_samples(self):
        a = [0.5, 0.7, 0.6, 0.9]
        assert welch_pvalue(a, list(a)) == 1.0

    def test_separated_constants(self):
        assert welch_pvalue([0, 0, 0, 0], [1, 1, 1, 1]) < 1e-3

    def test_matches_scipy_for_generic_samples(self):
        from scipy import stats
        rng = np.random.default_rng(3)
        a, b = rng.normal(0, 1, 50), rng.normal(0.3, 2, 70)
        assert welch_pvalue(a, b) == pytest.approx(stats.ttest_ind(a, b, equal_var=False).pvalue)

    def test_too_small(self):
        assert math.isnan(welch_pvalue([1.0], [2.0, 3.0]))

    def test_mean_std_skips_nan(self):
        assert mean_std([1.0, math.nan, 3.0]) == (2.0, 1.0)


samples = st.lists(st.tuples(finite, finite, finite, finite, finite), min_size=0, max_size=30)


class TestHistory:
    @settings(max_examples=40, deadline=None)
    @given(samples)
    def test_round_trip(self, tmp_path_factory, rows):
        path = tmp_path_factory.mktemp("h") / "history.csv"
        h = MetricsHistory(path)
        for i, r in enumerate(rows):
            h.append(MetricSample(i + 1, 15.0 * (i + 1), *r))
        assert read_metrics_csv(path) == h.samples
        if rows:
            assert np.array_equal(h.matrix(), np.array(rows, dtype=float))

    def test_ticks_strictly_increase(self):
        h = MetricsHistory()
        h.append(MetricSample(1, 15.0, 0, 0, 0, 0, 0))
        with pytest.raises(ValueError):
            h.append(MetricSample(1, 15.0, 0, 0, 0, 0, 0))

    def test_clear_leaves_header_only(self, tmp_path):
        path = tmp_path / "history.csv"
        h = MetricsHistory(path)
        h.append(MetricSample(1, 15.0, 1, 1, 1, 1, 1))
        h.clear()
        assert len(h) == 0
        assert path.read_text().strip() == "tick,time,cpu,ram,net_in,net_out,custom"
        assert list(tmp_path.iterdir()) == [path]

    def test_write_then_read(self, tmp_path):
        s = [MetricSample(i, 15.0 * i, 0.1 * i, 2, 3, 4, 5) for i in range(1, 4)]
        write_metrics_csv(tmp_path / "m.csv", s)
        assert read_metrics_csv(tmp_path / "m.csv") == s

    def test_bad_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_metrics_csv(tmp_path / "x.csv")


class TestSummarize:
    def test_single_task(self):
        from ppasim.cluster import Tier, default_topology, worker_spec
        from ppasim.autoscaler import FixedReplicas
        from ppasim.simcore import SimConfig, Simulation
        from ppasim.workload import TaskKind, TaskRequest
        specs = {t: worker_spec(t) for t in Tier}
        autos = {t: FixedReplicas(t, specs[t], 1) for t in Tier}
        task = TaskRequest(0, TaskKind.SORT, "zone-1", 1.0)
        rep = Simulation(default_topology(), [task], autos, specs, SimConfig(30.0)).run()
        st_ = summarize(rep)
        assert st_.response["sort"] == {"mean": pytest.approx(0.4), "std": 0.0, "count": 1}
        assert st_.completed == 1 and st_.pending == 0
        assert set(st_.rir) == {"edge", "cloud"}
        assert st_.decisions["cloud"] == {"reactive": 2}
        assert set(st_.as_dict()) >= {"response_time", "rir", "prediction_mse"}
