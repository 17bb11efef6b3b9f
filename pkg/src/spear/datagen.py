"""Seeded synthetic corpus: normal series plus injected anomalies of each kind.

Ground truth comes from the injection itself, never from the detectors in
:mod:`spear.labeler`, so detector power can be measured against it.
"""
from __future__ import annotations

import csv
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from spear.errors import ConfigError, DataError
from spear.labeler import AnomalyKind
from spear.series import TimeSeries, minmax_scale, window
from spear.tsmote import LabeledDataset

KINDS = list(AnomalyKind)


@dataclass
class GenConfig:
    n_series: int = 500
    series_len: int = 100
    anomaly_fraction: float = 0.2
    mix: dict = field(default_factory=lambda: {k.value: 0.2 for k in KINDS})
    noise_sigma: float = 1.0
    base_level: float = 0.0
    trend_slope: float = 0.05
    spike_magnitude: float = 8.0
    shift_magnitude: float = 4.0
    volatility_ratio: float = 5.0
    acceptable_range: tuple = (-5.0, 5.0)
    window_size: int = 100
    window_stride: int = 10
    seed: int = 42

    def __post_init__(self):
        if self.n_series < 1 or self.series_len < 1:
            raise ConfigError("n_series and series_len must be >= 1")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ConfigError(f"anomaly_fraction must be in [0, 1], got {self.anomaly_fraction}")
        unknown = set(self.mix) - {k.value for k in KINDS}
        if unknown:
            raise ConfigError(f"unknown anomaly kinds in mix: {sorted(unknown)}")
        if any(w < 0 for w in self.mix.values()) or abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ConfigError("mix weights must be non-negative and sum to 1")
        for name in ("trend_slope", "spike_magnitude", "shift_magnitude", "volatility_ratio"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        lo, hi = self.acceptable_range
        if lo > hi:
            raise ConfigError("acceptable_range low exceeds high")
        self.acceptable_range = (float(lo), float(hi))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["acceptable_range"] = list(self.acceptable_range)
        return d


@dataclass
class InjectionParams:
    trend_slope: float = 0.05
    spike_magnitude: float = 8.0
    shift_magnitude: float = 4.0
    volatility_ratio: float = 5.0
    acceptable_range: tuple = (-5.0, 5.0)

    @classmethod
    def from_config(cls, cfg: GenConfig) -> "InjectionParams":
        return cls(cfg.trend_slope, cfg.spike_magnitude, cfg.shift_magnitude,
                   cfg.volatility_ratio, cfg.acceptable_range)


def series_rng(seed: int, index: int, stream: str = "data") -> np.random.Generator:
    """Independent generator for (seed, stream name, series index)."""
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode()), int(index)])


def gen_normal(rng: np.random.Generator, T: int, noise_sigma: float, base_level: float = 0.0,
               id: str = "series") -> TimeSeries:
    if T < 1:
        raise DataError("series length must be >= 1")
    values = base_level + noise_sigma * rng.standard_normal(T)
    return TimeSeries.from_values(values, id)


def _split_point(rng, T):
    # interior band so both segments carry enough points to show the change
    return int(rng.integers(max(2, T // 4), max(3, (3 * T) // 4) + 1))


def inject(series: TimeSeries, kind: AnomalyKind, rng: np.random.Generator,
           params: InjectionParams | None = None) -> tuple[TimeSeries, np.ndarray]:
    """Return the modified series and a 0/1 mask of the points carrying the anomaly.

    Trend marks every point; spike and point-range mark the touched index;
    shift and volatility mark the first point after the split.
    """
    params = params or InjectionParams()
    x = series.values.copy()
    T = len(x)
    marks = np.zeros(T, dtype=np.int8)
    kind = AnomalyKind(kind)
    if kind in (AnomalyKind.SuddenShift, AnomalyKind.VolatilityChange) and T < 4:
        raise DataError(f"{kind.value} injection needs at least 4 points, got {T}")
    if kind in (AnomalyKind.SuddenSpike, AnomalyKind.PointRange) and T < 3:
        raise DataError(f"{kind.value} injection needs at least 3 points, got {T}")
    if kind is AnomalyKind.MonotonicTrend:
        x += params.trend_slope * np.arange(1, T + 1)
        marks[:] = 1
    elif kind is AnomalyKind.SuddenSpike:
        i = int(rng.integers(1, T - 1))
        x[i] += params.spike_magnitude
        marks[i] = 1
    elif kind is AnomalyKind.SuddenShift:
        k = _split_point(rng, T)
        x[k:] += params.shift_magnitude
        marks[k] = 1
    elif kind is AnomalyKind.VolatilityChange:
        k = _split_point(rng, T)
        level = x.mean()
        x[k:] = level + params.volatility_ratio * (x[k:] - level)
        marks[k] = 1
    else:
        lo, hi = params.acceptable_range
        i = int(rng.integers(1, T - 1))
        x[i] = hi + 0.5 * (hi - lo) if hi > lo else hi + 1.0
        marks[i] = 1
    return TimeSeries(series.id, series.timestamps, x), marks


@dataclass
class Corpus:
    series: list  # TimeSeries with per-point labels
    truth: list   # (series_id, label, kind name or "")


def gen_corpus(cfg: GenConfig) -> Corpus:
    """Generate the raw series with ground truth; deterministic per seed."""
    n_anom = int(round(cfg.anomaly_fraction * cfg.n_series))
    pick = np.random.default_rng([cfg.seed, zlib.crc32(b"assign")])
    anomalous = set(pick.permutation(cfg.n_series)[:n_anom].tolist())
    names = [k.value for k in KINDS]
    weights = np.array([cfg.mix.get(n, 0.0) for n in names])
    params = InjectionParams.from_config(cfg)
    series, truth = [], []
    for i in range(cfg.n_series):
        rng = series_rng(cfg.seed, i)
        sid = f"s{i:05d}"
        s = gen_normal(rng, cfg.series_len, cfg.noise_sigma, cfg.base_level, sid)
        marks = np.zeros(cfg.series_len, dtype=np.int8)
        kind = ""
        if i in anomalous:
            kind = names[int(rng.choice(len(names), p=weights))]
            s, marks = inject(s, AnomalyKind(kind), rng, params)
        series.append(TimeSeries(sid, s.timestamps, s.values, marks))
        truth.append((sid, int(bool(kind)), kind))
    return Corpus(series, truth)


def windows_dataset(series_list, size: int, stride: int, include_tail: bool = False,
                    kinds: dict | None = None) -> LabeledDataset:
    """Window every series and label each window by the marked points inside it.

    Each source stream is min-max scaled once over its full length and the same
    parameters are applied to all of its windows.
    """
    rows, labels, ids, sources, kind_col = [], [], [], [], []
    kinds = kinds or {}
    for s in series_list:
        _, params = minmax_scale(s)
        for w in window(s, size, stride, include_tail):
            scaled = params.apply(w.values)
            lab = int(w.labels is not None and bool(w.labels.any()))
            rows.append(scaled)
            labels.append(lab)
            ids.append(w.id)
            sources.append(s.id)
            kind_col.append(kinds.get(s.id, "") if lab else "")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), size)
    return LabeledDataset(X, np.array(labels, dtype=np.int64), None, ids, sources, kind_col)


def gen_dataset(cfg: GenConfig) -> tuple[LabeledDataset, Corpus]:
    corpus = gen_corpus(cfg)
    kinds = {sid: kind for sid, _, kind in corpus.truth}
    ds = windows_dataset(corpus.series, cfg.window_size, cfg.window_stride, kinds=kinds)
    return ds, corpus


def write_truth_csv(path, truth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "label", "kind"])
        w.writerows(truth)


def read_truth_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["series_id", "label", "kind"]:
            raise DataError(f"{path}: expected header series_id,label,kind")
        return {r["series_id"]: (int(r["label"]), r["kind"]) for r in reader}
