"""Forecast errors scaled by the in-sample seasonal-naive errors.

For an in-sample history ``y_1..y_n``, seasonal period ``s`` and ``h``
out-of-sample errors ``e = y - f``::

    MASE  = (n - s)/h * sum|e|   / sum_{t>s} |y_t - y_{t-s}|
    RMSSE = (n - s)/h * sqrt(sum e^2 / sum_{t>s} (y_t - y_{t-s})^2)
    AMSE  = (n - s)/h * |sum e|  / sum_{t>s} |y_t - y_{t-s}|

AMSE lets positive and negative errors cancel, so it measures bias.
"""

import numpy as np

from .errors import DimensionMismatch, ZeroDenominator

__all__ = ["mase", "rmsse", "amse", "METRICS"]


def _prep(actual, forecast, insample, s):
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    insample = np.asarray(insample, dtype=float)
    if actual.shape != forecast.shape or actual.ndim != 1 or actual.size == 0:
        raise DimensionMismatch(f"actual {actual.shape} and forecast {forecast.shape} must be equal 1-D")
    if s < 1 or insample.size <= s:
        raise DimensionMismatch(f"need more than s={s} in-sample values, got {insample.size}")
    d = insample[s:] - insample[:-s]
    return actual - forecast, d, (insample.size - s) / actual.size


def mase(actual, forecast, insample, s: int = 1) -> float:
    e, d, c = _prep(actual, forecast, insample, s)
    den = np.abs(d).sum()
    if den == 0:
        raise ZeroDenominator("in-sample seasonal differences are all zero")
    return float(c * np.abs(e).sum() / den)


def rmsse(actual, forecast, insample, s: int = 1) -> float:
    e, d, c = _prep(actual, forecast, insample, s)
    den = (d * d).sum()
    if den == 0:
        raise ZeroDenominator("in-sample seasonal differences are all zero")
    return float(c * np.sqrt((e * e).sum() / den))


def amse(actual, forecast, insample, s: int = 1) -> float:
    e, d, c = _prep(actual, forecast, insample, s)
    den = np.abs(d).sum()
    if den == 0:
        raise ZeroDenominator("in-sample seasonal differences are all zero")
    return float(c * abs(e.sum()) / den)


METRICS = {"mase": mase, "rmsse": rmsse, "amse": amse}
