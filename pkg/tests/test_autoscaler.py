import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppasim.autoscaler import (PolicyConfig, Provenance, ScalingDecision, default_threshold,
                               hpa_decide, ppa_decide, select_key_metric, static_policy)
from ppasim.forecast.base import Forecaster, Prediction
from ppasim.telemetry import MetricSample, UnknownChannel


class Stub(Forecaster):
    model_type = "stub"

    def __init__(self, predicted, confidence=None, valid=True, bayesian=False):
        self.predicted, self.conf, self.valid, self.bayesian = predicted, confidence, valid, bayesian

    def is_valid(self):
        return self.valid

    def is_bayesian(self):
        return self.bayesian

    def predict(self, sample, key="cpu"):
        v = sample.vector()
        v[0] = self.predicted
        return Prediction(v, self.conf)


def cpu(value, tick=1):
    return MetricSample(tick, 15.0 * tick, value, 0, 0, 0, 0)


CFG = PolicyConfig("cpu", 400.0, 0.5, 1)


class TestStaticPolicy:
    @pytest.mark.parametrize("value, threshold, expected",
                             [(250, 100, 3), (100, 100, 1), (0, 100, 1), (1250, 400, 4)])
    def test_examples(self, value, threshold, expected):
        assert static_policy(value, threshold) == expected

    def test_min_replicas(self):
        assert static_policy(10, 100, min_replicas=2) == 2

    @given(st.floats(0, 1e7), st.floats(1e-3, 1e5))
    def test_rational_oracle(self, value, threshold):
        q = Fraction(value) / Fraction(threshold)
        oracle = max(1, q.numerator // q.denominator + (q.numerator % q.denominator != 0))
        assert static_policy(value, threshold) == oracle

    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(1, 1e4))
    def test_monotone(self, a, b, threshold):
        lo, hi = sorted((a, b))
        assert static_policy(lo, threshold) <= static_policy(hi, threshold)

    def test_errors(self):
        with pytest.raises(ValueError):
            static_policy(1, 0)
        with pytest.raises(ValueError):
            static_policy(-1, 10)
        with pytest.raises(ValueError):
            static_policy(math.inf, 10)


class TestKeyMetric:
    def test_select(self):
        s = MetricSample(1, 15.0, 1500, 10, 42, 3, 7)
        assert select_key_metric(s, "cpu") == 1500
        assert select_key_metric(s, PolicyConfig("net_in", 20)) == 42
        with pytest.raises(UnknownChannel):
            select_key_metric(s, "latency")

    def test_defaults(self):
        assert default_threshold("cpu", "edge") == 400
        assert default_threshold("net_in", "edge") == 20
        assert default_threshold("net_in", "cloud") == 1.0
        with pytest.raises(ValueError):
            default_threshold("ram", "edge")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PolicyConfig(threshold=0)
        with pytest.raises(ValueError):
            PolicyConfig(confidence_threshold=1.5)
        with pytest.raises(UnknownChannel):
            PolicyConfig(key_metric="latency")


class TestHpa:
    def test_examples(self):
        assert hpa_decide(cpu(1250), CFG, 6).desired_replicas == 4
        d = hpa_decide(cpu(3200), CFG, 6)
        assert (d.desired_replicas, d.provenance, d.clamped) == (6, Provenance.CLAMPED, True)
        assert hpa_decide(cpu(0), CFG, 6).desired_replicas == 1
        assert hpa_decide(cpu(0), CFG, 6).provenance is Provenance.REACTIVE


class TestPpa:
    def test_proactive(self):
        d = ppa_decide(cpu(100), Stub(900), CFG, 6)
        assert (d.desired_replicas, d.provenance, d.predicted_key_metric) == \
            (3, Provenance.PROACTIVE, 900)

    def test_invalid_model(self):
        for model in (None, Stub(900, valid=False)):
            d = ppa_decide(cpu(850), model, CFG, 6)
            assert (d.desired_replicas, d.provenance) == (3, Provenance.FALLBACK_INVALID)
            assert d.predicted_key_metric is None

    def test_low_confidence(self):
        d = ppa_decide(cpu(100), Stub(900, 0.2, bayesian=True), CFG, 6)
        assert (d.desired_replicas, d.provenance) == (1, Provenance.FALLBACK_LOW_CONFIDENCE)
        assert d.confidence == 0.2 and d.predicted_key_metric == 900

    def test_negative_prediction_floors_at_zero(self):
        d = ppa_decide(cpu(100), Stub(-50), CFG, 6)
        assert d.predicted_key_metric == 0.0 and d.desired_replicas == 1

    def test_clamp(self):
        d = ppa_decide(cpu(100), Stub(5000), CFG, 6)
        assert (d.desired_replicas, d.provenance) == (6, Provenance.CLAMPED)

    @given(st.floats(0, 1e5), st.floats(0, 1e5), st.integers(1, 40))
    def test_never_exceeds_max(self, current, predicted, max_r):
        d = ppa_decide(cpu(current), Stub(predicted), CFG, max_r)
        assert 1 <= d.desired_replicas <= max_r


class TestDecisionRow:
    def test_csv_row(self):
        d = ScalingDecision(3, "edge", 1.5, None, 0.25, 2, 6, False, Provenance.REACTIVE)
        assert d.row() == "3,edge,1.5,,0.25,2,0,reactive"
        assert len(d.row().split(",")) == len(ScalingDecision.CSV_HEADER.split(","))
