"""T-SMOTE minority oversampling for fixed-length window datasets."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from spear import kernels
from spear.errors import DataError

DEFAULT_K = 5


@dataclass
class LabeledDataset:
    """Fixed-length feature windows with binary labels.

    ``X`` holds one window per row (scaled values in [0, 1] in the pipeline),
    ``y`` the 0/1 labels and ``synthetic`` marks rows produced by :func:`balance`.
    """

    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray = None
    ids: list = None
    sources: list = None
    kinds: list = None
    parents: dict = field(default_factory=dict)  # synthetic row -> (base row, neighbour row)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        n = len(self.y)
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise DataError("feature matrix must be 2-D with one row per label")
        if np.any((self.y != 0) & (self.y != 1)):
            raise DataError("labels must be 0 or 1")
        if self.synthetic is None:
            self.synthetic = np.zeros(n, dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool)
        if self.ids is None:
            self.ids = [f"w{i}" for i in range(n)]
        if self.sources is None:
            self.sources = list(self.ids)
        if self.kinds is None:
            self.kinds = [""] * n

    def __len__(self):
        return len(self.y)

    @property
    def class_counts(self) -> tuple[int, int]:
        """(n_majority, n_minority)."""
        pos = int(self.y.sum())
        neg = len(self.y) - pos
        return (max(pos, neg), min(pos, neg))

    @property
    def minority_label(self) -> int:
        pos = int(self.y.sum())
        return 1 if pos <= len(self.y) - pos else 0

    def subset(self, idx) -> "LabeledDataset":
        idx = [int(i) for i in idx]
        return LabeledDataset(self.X[idx], self.y[idx], self.synthetic[idx],
                              [self.ids[i] for i in idx], [self.sources[i] for i in idx],
                              [self.kinds[i] for i in idx])


def k_nearest_minority(dataset: LabeledDataset, k: int = DEFAULT_K) -> np.ndarray:
    """Neighbour lists among minority rows, as positions within the minority subset.

    Row i of the result lists the k nearest *other* minority samples of the
    i-th minority sample by Euclidean distance; ties go to the lower index.
    """
    minority = np.flatnonzero(dataset.y == dataset.minority_label)
    if len(minority) < 2:
        raise DataError(f"T-SMOTE needs at least 2 minority samples, found {len(minority)}; "
                        "disable resampling for this dataset")
    if not 1 <= k <= len(minority) - 1:
        raise DataError(f"k={k} must lie in [1, {len(minority) - 1}] for {len(minority)} minority samples")
    d = kernels.sq_distances(dataset.X[minority])
    np.fill_diagonal(d, np.inf)
    # stable sort keeps lower indices first among equal distances
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def interpolate(x_i, x_nn, lam: float) -> np.ndarray:
    """``x_i + lam * (x_nn - x_i)``."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_nn = np.asarray(x_nn, dtype=np.float64)
    if x_i.shape != x_nn.shape:
        raise DataError(f"cannot interpolate vectors of shapes {x_i.shape} and {x_nn.shape}")
    return x_i + lam * (x_nn - x_i)


def balance(dataset: LabeledDataset, k: int = DEFAULT_K, seed: int = 0) -> LabeledDataset:
    """Append synthetic minority windows until both classes have equal counts."""
    n_major, n_minor = dataset.class_counts
    if n_minor == 0:
        raise DataError("both classes must be present to balance a dataset")
    need = n_major - n_minor
    if need == 0:
        return dataset
    minority = np.flatnonzero(dataset.y == dataset.minority_label)
    if len(minority) >= 2:
        k = min(k, len(minority) - 1)
    nbrs = k_nearest_minority(dataset, k)
    rng = np.random.default_rng(seed)
    L = dataset.X.shape[1]
    new_X = np.empty((need, L), dtype=np.float64)
    parents = {}
    for j in range(need):
        base = int(rng.integers(len(minority)))
        nn = int(nbrs[base, rng.integers(k)])
        lam = float(rng.random())
        new_X[j] = interpolate(dataset.X[minority[base]], dataset.X[minority[nn]], lam)
        parents[len(dataset) + j] = (int(minority[base]), int(minority[nn]))
    label = dataset.minority_label
    out = LabeledDataset(
        np.vstack([dataset.X, new_X]),
        np.concatenate([dataset.y, np.full(need, label)]),
        np.concatenate([dataset.synthetic, np.ones(need, dtype=bool)]),
        dataset.ids + [f"syn{j}" for j in range(need)],
        dataset.sources + ["synthetic"] * need,
        dataset.kinds + [""] * need,
    )
    out.parents = parents
    return out


# -- dataset file ------------------------------------------------------------

def write_dataset(path, ds: LabeledDataset) -> None:
    """CSV: ``window_id,source_id,label,synthetic,kind,x0..x{L-1}``."""
    L = ds.X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_id", "source_id", "label", "synthetic", "kind"] + [f"x{i}" for i in range(L)])
        for i in range(len(ds)):
            w.writerow([ds.ids[i], ds.sources[i], int(ds.y[i]), int(ds.synthetic[i]), ds.kinds[i]]
                       + [repr(float(v)) for v in ds.X[i]])


def read_dataset(path) -> LabeledDataset:
    ids, sources, y, syn, kinds, rows = [], [], [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:5] != ["window_id", "source_id", "label", "synthetic", "kind"]:
            raise DataError(f"{path}: not a window dataset file")
        L = len(header) - 5
        for lineno, row in enumerate(reader, start=2):
            if len(row) != L + 5:
                raise DataError(f"{path}:{lineno}: expected {L + 5} fields, got {len(row)}")
            try:
                ids.append(row[0])
                sources.append(row[1])
                y.append(int(row[2]))
                syn.append(bool(int(row[3])))
                kinds.append(row[4])
                rows.append([float(v) for v in row[5:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), L)
    return LabeledDataset(X, np.array(y, dtype=np.int64), np.array(syn, dtype=bool), ids, sources, kinds)
