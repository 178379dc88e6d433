"""Replay oracle: answers with the recorded next sample of a reference run."""
from __future__ import annotations

import numpy as np

from ..telemetry import MetricSample, channel_index
from .base import Forecaster, Prediction


class OracleForecaster(Forecaster):
    """Perfect forecaster for a known metric series.

    ``series`` maps tick to the five-channel vector observed at that tick.
    Past the end of the series it repeats the current sample.
    """

    model_type = "oracle"

    def __init__(self, series: dict[int, np.ndarray]):
        self.series = {int(k): np.asarray(v, dtype=float) for k, v in series.items()}

    @classmethod
    def from_samples(cls, samples) -> "OracleForecaster":
        return cls({s.tick: s.vector() for s in samples})

    def predict(self, sample: MetricSample, key: str = "cpu") -> Prediction:
        channel_index(key)
        nxt = self.series.get(sample.tick + 1)
        if nxt is None:
            nxt = sample.vector()
        return Prediction(nxt.copy(), None)
