"""Error and calibration metrics used by the experiment tables."""

from __future__ import annotations

import numpy as np

from gridfuse.errors import InvalidArgument
from gridfuse.gp.predict import PosteriorPrediction, confidence_interval

RMSE_PERCENT_DEFINITION = "100 * sqrt(mean((estimate - truth)^2)) / sqrt(mean(truth^2))"


def _pair(truth, estimate):
    t = np.asarray(truth, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if t.shape != e.shape:
        raise InvalidArgument(f"length mismatch: {t.size} truth vs {e.size} estimate")
    return t, e


def rmse_percent(truth, estimate) -> float:
    t, e = _pair(truth, estimate)
    if t.size == 0:
        raise InvalidArgument("rmse_percent needs at least one value")
    rms = np.sqrt(np.mean(t * t))
    if not rms > 0:
        raise InvalidArgument("truth RMS is zero; percentage error undefined")
    return float(100.0 * np.sqrt(np.mean((e - t) ** 2)) / rms)


def mean_absolute_error(truth, estimate) -> float:
    t, e = _pair(truth, estimate)
    if t.size == 0:
        raise InvalidArgument("mean_absolute_error needs at least one value")
    return float(np.mean(np.abs(e - t)))


def ci_coverage(truth, pred: PosteriorPrediction, level: float = 0.95, where=None) -> float:
    """Fraction of ``truth`` inside the two-sided interval at ``level``.

    ``where`` optionally restricts the count to a boolean subset of instants.
    """
    t = np.asarray(truth, dtype=float).ravel()
    if t.size != pred.mean.size:
        raise InvalidArgument(f"length mismatch: {t.size} truth vs {pred.mean.size} predictions")
    lo, hi = confidence_interval(pred, level)
    inside = (t >= lo) & (t <= hi)
    if where is not None:
        sel = np.asarray(where, dtype=bool).ravel()
        if sel.shape != inside.shape:
            raise InvalidArgument("coverage mask length does not match predictions")
        if not sel.any():
            raise InvalidArgument("coverage mask selects no instants")
        inside = inside[sel]
    return float(np.mean(inside))
