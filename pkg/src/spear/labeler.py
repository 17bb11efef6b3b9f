"""Context-anomaly detectors and the labelling pipeline built on them."""
from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from spear import kernels
from spear.errors import ConfigError
from spear.series import TimeSeries, minmax_scale
from spear.stats import f_upper_tail_p, linreg_slope_test, student_t_two_sided_p

log = logging.getLogger(__name__)

SLOPE_THRESHOLD = 0.01
ALPHA = 0.05
SPIKE_SIGMAS = 3.0


class AnomalyKind(enum.Enum):
    MonotonicTrend = "MonotonicTrend"
    SuddenSpike = "SuddenSpike"
    SuddenShift = "SuddenShift"
    VolatilityChange = "VolatilityChange"
    PointRange = "PointRange"


@dataclass(frozen=True)
class Detection:
    """A detector hit plus the evidence that triggered it."""

    kind: AnomalyKind
    statistic: float
    p_value: float | None = None
    index: int | None = None  # split point k (1-based prefix length) or difference index


@dataclass
class LabelerConfig:
    trend: bool = True
    spike: bool = True
    shift: bool = True
    volatility: bool = True
    point_range: tuple[float, float] | None = None  # acceptable (low, high); None disables
    slope_threshold: float = SLOPE_THRESHOLD
    alpha: float = ALPHA
    scaled_slope: bool = False  # apply the slope threshold after min-max scaling


@dataclass
class AnomalyLabelSet:
    series_id: str
    kinds: set = field(default_factory=set)
    point_indices: list = field(default_factory=list)
    detections: list = field(default_factory=list)

    @property
    def is_anomalous(self) -> bool:
        return bool(self.kinds)


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


def detect_monotonic_trend(series, slope_threshold=SLOPE_THRESHOLD, alpha=ALPHA,
                           scaled=False) -> Detection | None:
    x = _values(series)
    if len(x) < 3:
        log.debug("trend detector not applicable to %d points", len(x))
        return None
    if scaled:
        x, _ = minmax_scale(x)
    fit = linreg_slope_test(x)
    if abs(fit.slope) > slope_threshold and fit.p_value < alpha:
        return Detection(AnomalyKind.MonotonicTrend, fit.slope, fit.p_value)
    return None


def detect_sudden_spike(series, n_sigmas=SPIKE_SIGMAS) -> Detection | None:
    x = _values(series)
    if len(x) < 3:
        log.debug("spike detector not applicable to %d points", len(x))
        return None
    d = np.abs(np.diff(x))
    theta = d.mean() + n_sigmas * d.std(ddof=1)
    hits = np.flatnonzero(d > theta)
    if hits.size == 0:
        return None
    i = int(hits[np.argmax(d[hits])])
    return Detection(AnomalyKind.SuddenSpike, float(d[i]), None, i + 1)


def _split_scan(x, stats, p_of, kind, alpha):
    # p is monotone in the statistic at fixed dof, so the most extreme split decides the flag
    i = int(np.argmax(stats))
    p = p_of(stats[i])
    if p < alpha:
        return Detection(kind, float(stats[i]), p, i + 2)
    return None


def detect_sudden_shift(series, alpha=ALPHA) -> Detection | None:
    """Scan splits k = 2..T-2 with a pooled two-sample t-test.

    Reports the most significant split (lowest k among ties).
    """
    x = _values(series)
    T = len(x)
    if T < 4:
        log.debug("shift detector not applicable to %d points", T)
        return None
    t = np.abs(kernels.split_t_stats(x))
    return _split_scan(x, t, lambda s: student_t_two_sided_p(s, T - 2),
                       AnomalyKind.SuddenShift, alpha)


def detect_volatility_change(series, alpha=ALPHA) -> Detection | None:
    """Scan splits k = 2..T-2 with Levene's test; same reporting as the shift scan."""
    x = _values(series)
    T = len(x)
    if T < 4:
        log.debug("volatility detector not applicable to %d points", T)
        return None
    w = kernels.split_levene_stats(x)
    return _split_scan(x, w, lambda s: f_upper_tail_p(s, 1, T - 2),
                       AnomalyKind.VolatilityChange, alpha)


def detect_point_anomalies(series, low: float, high: float) -> list[int]:
    if low > high:
        raise ConfigError(f"acceptable range low {low} exceeds high {high}")
    x = _values(series)
    return [int(i) for i in np.flatnonzero((x < low) | (x > high))]


def label_series(series, config: LabelerConfig | None = None) -> AnomalyLabelSet:
    """Run every enabled detector independently and union the kinds that fire."""
    config = config or LabelerConfig()
    sid = series.id if isinstance(series, TimeSeries) else "series"
    out = AnomalyLabelSet(sid)
    found = []
    if config.trend:
        found.append(detect_monotonic_trend(series, config.slope_threshold, config.alpha,
                                            config.scaled_slope))
    if config.spike:
        found.append(detect_sudden_spike(series))
    if config.shift:
        found.append(detect_sudden_shift(series, config.alpha))
    if config.volatility:
        found.append(detect_volatility_change(series, config.alpha))
    for det in found:
        if det is not None:
            out.kinds.add(det.kind)
            out.detections.append(det)
    if config.point_range is not None:
        idx = detect_point_anomalies(series, *config.point_range)
        if idx:
            out.kinds.add(AnomalyKind.PointRange)
            out.point_indices = idx
    return out


KIND_ORDER = list(AnomalyKind)


def format_kinds(kinds) -> str:
    return "|".join(k.value for k in KIND_ORDER if k in kinds)


def write_labels(path, labels: list[AnomalyLabelSet]) -> dict:
    """Write the label CSV and return the per-kind summary counts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "is_anomalous", "kinds", "point_indices"])
        for ls in labels:
            w.writerow([ls.series_id, int(ls.is_anomalous), format_kinds(ls.kinds),
                        "|".join(str(i) for i in ls.point_indices)])
    return summarize(labels)


def summarize(labels: list[AnomalyLabelSet]) -> dict:
    counts = {k.value: sum(k in ls.kinds for ls in labels) for k in KIND_ORDER}
    return {"n_series": len(labels),
            "n_anomalous": sum(ls.is_anomalous for ls in labels),
            "kinds": counts}


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
