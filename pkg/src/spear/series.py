"""Univariate series representation, scaling, quantization and windowing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spear.errors import ConfigError, DataError

DEFAULT_N_BINS = 100


@dataclass(frozen=True)
class ScaleParams:
    min: float
    max: float

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise DataError(f"scale parameters must be finite, got ({self.min}, {self.max})")
        if self.min > self.max:
            raise DataError(f"scale min {self.min} exceeds max {self.max}")

    def apply(self, values) -> np.ndarray:
        """Scale ``values`` with these parameters and clamp into [0, 1]."""
        v = np.asarray(values, dtype=np.float64)
        span = self.max - self.min
        if span == 0.0:
            return np.zeros_like(v)
        return np.clip((v - self.min) / span, 0.0, 1.0)


@dataclass(frozen=True)
class TimeSeries:
    id: str
    timestamps: np.ndarray
    values: np.ndarray
    labels: np.ndarray | None = None  # optional per-observation 0/1 labels

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vs = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vs)
        if vs.ndim != 1 or ts.shape != vs.shape:
            raise DataError(f"series {self.id!r}: timestamps and values must be 1-D and equally long")
        if len(vs) < 1:
            raise DataError(f"series {self.id!r} is empty")
        bad = np.flatnonzero(~np.isfinite(vs))
        if bad.size:
            raise DataError(f"series {self.id!r}: non-finite value at index {int(bad[0])}")
        if np.any(np.diff(ts) <= 0):
            raise DataError(f"series {self.id!r}: timestamps must be strictly increasing")
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int8)
            if lab.shape != vs.shape:
                raise DataError(f"series {self.id!r}: label column length mismatch")
            object.__setattr__(self, "labels", lab)

    @classmethod
    def from_values(cls, values, id="series", labels=None) -> "TimeSeries":
        values = np.asarray(values, dtype=np.float64)
        return cls(id, np.arange(len(values), dtype=np.float64), values, labels)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class QuantizedWindow:
    tokens: np.ndarray
    n_bins: int
    mask: np.ndarray
    scale: ScaleParams
    label: int = 0
    source_id: str = ""

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "mask", mask)
        if tokens.shape != mask.shape or tokens.ndim != 1:
            raise DataError("tokens and mask must be 1-D with equal length")
        if not mask.any():
            raise DataError("a window needs at least one real (unmasked) position")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.n_bins):
            raise DataError(f"token outside [0, {self.n_bins - 1}]")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


def _check_finite(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DataError("cannot scale an empty series")
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        raise DataError(f"non-finite value at index {int(bad[0])}")
    return v


def minmax_scale(series) -> tuple[np.ndarray, ScaleParams]:
    """Min-max scale a series (or raw value array) into [0, 1].

    A constant series maps to all zeros. The returned :class:`ScaleParams`
    can be reused on later windows of the same stream via ``params.apply``.
    """
    values = series.values if isinstance(series, TimeSeries) else series
    v = _check_finite(values)
    params = ScaleParams(float(v.min()), float(v.max()))
    return params.apply(v), params


def quantize(scaled, n_bins: int = DEFAULT_N_BINS) -> np.ndarray:
    """Map values in [0, 1] to uniform bin indices ``min(floor(v * N), N - 1)``."""
    if int(n_bins) != n_bins or n_bins < 2:
        raise ConfigError(f"n_bins must be an integer >= 2, got {n_bins!r}")
    v = np.clip(np.asarray(scaled, dtype=np.float64), 0.0, 1.0)
    return np.minimum(np.floor(v * n_bins), n_bins - 1).astype(np.int64)


def dequantize(token, n_bins: int, scale: ScaleParams) -> float:
    """Bin centre of ``token`` mapped back through the inverse scaling."""
    if not 0 <= token < n_bins:
        raise DataError(f"token {token} outside [0, {n_bins - 1}]")
    return scale.min + (scale.max - scale.min) * (token + 0.5) / n_bins


def window(series: TimeSeries, size: int, stride: int, include_tail: bool = False) -> list[TimeSeries]:
    """Fixed-length sliding windows starting at 0, stride, 2*stride, ...

    With ``include_tail`` a final window ending exactly at the last point is
    added when the regular grid leaves points uncovered.
    """
    if size < 1 or stride < 1:
        raise ConfigError(f"window size and stride must be >= 1 (got {size}, {stride})")
    T = len(series)
    if T < size:
        return []
    starts = list(range(0, T - size + 1, stride))
    if include_tail and starts[-1] + size < T:
        starts.append(T - size)
    out = []
    for s in starts:
        sl = slice(s, s + size)
        labels = None if series.labels is None else series.labels[sl]
        out.append(TimeSeries(f"{series.id}@{s}", series.timestamps[sl], series.values[sl], labels))
    return out


def fit_to_length(tokens, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncate (keeping the head) or end-pad with token 0 to exactly ``max_len``."""
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    tokens = np.asarray(tokens, dtype=np.int64)[:max_len]
    n = len(tokens)
    out = np.zeros(max_len, dtype=np.int64)
    out[:n] = tokens
    mask = np.zeros(max_len, dtype=bool)
    mask[:n] = True
    return out, mask


def quantize_window(values, n_bins: int, max_len: int, scale: ScaleParams | None = None,
                    label: int = 0, source_id: str = "") -> QuantizedWindow:
    """Scale (own min-max unless ``scale`` is given), quantize and fit one window."""
    if scale is None:
        scaled, scale = minmax_scale(values)
    else:
        scaled = scale.apply(_check_finite(values))
    tokens, mask = fit_to_length(quantize(scaled, n_bins), max_len)
    return QuantizedWindow(tokens, n_bins, mask, scale, int(label), source_id)


# -- CSV ingestion ---------------------------------------------------------

SERIES_HEADER = ("series_id", "t", "value")


def read_series_csv(path) -> list[TimeSeries]:
    """Read ``series_id,t,value[,label]`` rows into series, in order of first appearance."""
    rows: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if tuple(header[:3]) != SERIES_HEADER or len(header) > 4 or (len(header) == 4 and header[3] != "label"):
            raise DataError(f"{path}: expected header series_id,t,value[,label], got {','.join(header)}")
        has_label = len(header) == 4
        for lineno, row in enumerate(reader, start=2):
            try:
                t = float(row["t"])
                v = float(row["value"])
                lab = int(row["label"]) if has_label else 0
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if lab not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1")
            rows.setdefault(row["series_id"], []).append((t, v, lab))
    out = []
    for sid, obs in rows.items():
        arr = np.array(obs, dtype=np.float64)
        labels = arr[:, 2].astype(np.int8) if has_label else None
        try:
            out.append(TimeSeries(sid, arr[:, 0], arr[:, 1], labels))
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return out


def write_series_csv(path, series: Sequence[TimeSeries]) -> None:
    with_labels = any(s.labels is not None for s in series)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER + (("label",) if with_labels else ()))
        for s in series:
            labels = s.labels if s.labels is not None else np.zeros(len(s), dtype=np.int8)
            for t, v, lab in zip(s.timestamps, s.values, labels):
                row = [s.id, repr(float(t)), repr(float(v))]
                if with_labels:
                    row.append(int(lab))
                w.writerow(row)

