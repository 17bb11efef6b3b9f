import numpy as np
import pytest

from spear.datagen import (GenConfig, InjectionParams, gen_corpus, gen_dataset, gen_normal, inject,
                           read_truth_csv, series_rng, windows_dataset, write_truth_csv)
from spear.errors import ConfigError, DataError
from spear.labeler import (AnomalyKind, detect_monotonic_trend, detect_point_anomalies,
                           detect_sudden_shift, detect_sudden_spike, detect_volatility_change)
from spear.series import TimeSeries
from spear.tsmote import write_dataset


def test_gen_normal_constant_without_noise():
    s = gen_normal(np.random.default_rng(0), 50, 0.0, base_level=3.0)
    assert np.all(s.values == 3.0)


def test_gen_normal_repeatable_and_centred():
    a = gen_normal(series_rng(1, 7), 400, 2.0, 10.0)
    b = gen_normal(series_rng(1, 7), 400, 2.0, 10.0)
    np.testing.assert_array_equal(a.values, b.values)
    assert abs(a.values.mean() - 10.0) < 5 * 2.0 / np.sqrt(400)


def test_gen_normal_rejects_empty():
    with pytest.raises(DataError):
        gen_normal(np.random.default_rng(0), 0, 1.0)


def flat(T=100):
    return TimeSeries.from_values(np.zeros(T), "f")


def noisy(seed=0, T=100):
    return gen_normal(np.random.default_rng(seed), T, 1.0)


def test_inject_trend_detected():
    out, marks = inject(flat(), AnomalyKind.MonotonicTrend, np.random.default_rng(0))
    assert detect_monotonic_trend(out) is not None and marks.all()


def test_inject_spike_detected():
    out, marks = inject(noisy(), AnomalyKind.SuddenSpike, np.random.default_rng(0),
                        InjectionParams(spike_magnitude=10.0))
    i = int(np.flatnonzero(marks)[0])
    assert 1 <= i <= 98 and marks.sum() == 1
    assert detect_sudden_spike(out) is not None


def test_inject_shift_and_volatility_detected():
    rng = np.random.default_rng(4)
    out, marks = inject(noisy(1), AnomalyKind.SuddenShift, rng)
    k = int(np.flatnonzero(marks)[0])
    assert 25 <= k <= 75 and detect_sudden_shift(out) is not None
    out, marks = inject(noisy(2), AnomalyKind.VolatilityChange, rng)
    k = int(np.flatnonzero(marks)[0])
    assert out.values[k:].std() > 3 * out.values[:k].std()
    assert detect_volatility_change(out) is not None


def test_inject_point_range_outside():
    params = InjectionParams(acceptable_range=(-5.0, 5.0))
    out, marks = inject(flat(), AnomalyKind.PointRange, np.random.default_rng(0), params)
    assert detect_point_anomalies(out, -5, 5) == np.flatnonzero(marks).tolist()


@pytest.mark.parametrize("kind, params", [
    (AnomalyKind.MonotonicTrend, InjectionParams(trend_slope=0.0)),
    (AnomalyKind.SuddenSpike, InjectionParams(spike_magnitude=0.0)),
    (AnomalyKind.SuddenShift, InjectionParams(shift_magnitude=0.0)),
    (AnomalyKind.VolatilityChange, InjectionParams(volatility_ratio=1.0)),
])
def test_inject_identity_params(kind, params):
    s = noisy(3)
    out, _ = inject(s, kind, np.random.default_rng(0), params)
    np.testing.assert_allclose(out.values, s.values, rtol=0, atol=1e-12)


def test_inject_too_short():
    with pytest.raises(DataError):
        inject(flat(3), AnomalyKind.SuddenShift, np.random.default_rng(0))
    with pytest.raises(DataError):
        inject(flat(2), AnomalyKind.SuddenSpike, np.random.default_rng(0))


@pytest.mark.parametrize("frac, n, want", [(0.1, 200, 20), (0.0, 50, 0), (0.2, 500, 100)])
def test_corpus_counts(frac, n, want):
    corpus = gen_corpus(GenConfig(n_series=n, series_len=30, anomaly_fraction=frac))
    assert sum(lab for _, lab, _ in corpus.truth) == want
    assert len(corpus.series) == n


def test_fraction_zero_gives_all_negative_windows():
    ds, _ = gen_dataset(GenConfig(n_series=20, series_len=40, anomaly_fraction=0.0,
                                  window_size=20, window_stride=10))
    assert len(ds) == 20 * 3 and ds.y.sum() == 0


def test_mix_selects_kinds():
    mix = {k.value: 0.0 for k in AnomalyKind}
    mix["SuddenShift"] = 1.0
    corpus = gen_corpus(GenConfig(n_series=40, series_len=30, mix=mix))
    assert {kind for _, lab, kind in corpus.truth if lab} == {"SuddenShift"}


def test_dataset_deterministic(tmp_path):
    cfg = GenConfig(n_series=30, series_len=50, window_size=20, window_stride=10, seed=5)
    for name in ("a", "b"):
        ds, corpus = gen_dataset(cfg)
        write_dataset(tmp_path / f"{name}.csv", ds)
        write_truth_csv(tmp_path / f"{name}.truth.csv", corpus.truth)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert read_truth_csv(tmp_path / "a.truth.csv") == read_truth_csv(tmp_path / "b.truth.csv")
    other, _ = gen_dataset(GenConfig(n_series=30, series_len=50, window_size=20, window_stride=10, seed=6))
    assert not np.array_equal(other.X, ds.X)


def test_window_labels_follow_marks():
    s = TimeSeries("s", np.arange(30.0), np.arange(30.0), np.r_[np.zeros(25), 1, np.zeros(4)].astype(int))
    ds = windows_dataset([s], 10, 10, kinds={"s": "SuddenSpike"})
    assert ds.y.tolist() == [0, 0, 1] and ds.kinds == ["", "", "SuddenSpike"]
    assert ds.X.min() == 0.0 and ds.X.max() == 1.0  # one scale per stream


@pytest.mark.parametrize("kw", [
    {"anomaly_fraction": 1.5}, {"mix": {"Bogus": 1.0}}, {"mix": {"SuddenSpike": 0.5}},
    {"spike_magnitude": 0.0}, {"noise_sigma": -1.0}, {"acceptable_range": (3.0, 1.0)}, {"n_series": 0},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        GenConfig(**kw)


def test_reference_corpus_detector_power():
    # ground truth comes from injection, so detector power is measurable against it
    corpus = gen_corpus(GenConfig())
    detectors = {
        "MonotonicTrend": detect_monotonic_trend,
        "SuddenSpike": detect_sudden_spike,
        "SuddenShift": detect_sudden_shift,
        "VolatilityChange": detect_volatility_change,
        "PointRange": lambda s: detect_point_anomalies(s, -5.0, 5.0) or None,
    }
    for kind, detect in detectors.items():
        hits = [detect(s) is not None for s, (_, lab, k) in zip(corpus.series, corpus.truth) if k == kind]
        assert len(hits) > 0
        assert np.mean(hits) >= 0.9, kind
