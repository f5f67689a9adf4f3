"""Dataset loading, cleaning, normalization, PCA, noise injection and the
stratified split protocol used by the experiment harness.

Supported on-disk formats:
  * sparse text: ``<label> <index>:<value> ...`` per line, 1-based ascending
    indices, ``#`` starts a comment; absent indices are zeros, not missing
  * IDX binary (big-endian magic 0x00000803 images / 0x00000801 labels),
    optionally gzip-compressed; pixels are scaled to [0, 1]
  * dense CSV with a header whose ``label`` column holds the class and all
    other columns are numeric features ('?' or empty cells mean missing)
  * the UCI arrhythmia table (comma-separated, no header, '?' missing, class
    in the last column)
"""

from __future__ import annotations

import gzip
import logging
import math
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

ARRHYTHMIA_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/arrhythmia/arrhythmia.data"
)
MNIST_URLS = {
    "train-images-idx3-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz",
}


@dataclass
class RawTable:
    """A dense table with an explicit missing-value mask.

    rows holds nan at masked positions; labels are integers.
    """

    rows: np.ndarray
    missing: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.missing = np.asarray(self.missing, dtype=bool)
        self.labels = np.asarray(self.labels)
        if self.rows.ndim != 2:
            raise ValueError("rows must be 2-d")
        if self.missing.shape != self.rows.shape:
            raise ValueError(
                f"mask shape {self.missing.shape} != rows shape {self.rows.shape}"
            )
        if self.labels.shape != (self.rows.shape[0],):
            raise ValueError("need one label per row")

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split protocol: large classes give away a larger share.

    Classes with more than large_class_threshold instances contribute
    ceil(large_fraction * count) training rows, smaller classes
    ceil(small_fraction * count); min_class_size is the survival cutoff used
    by the cleaning step.
    """

    large_class_threshold: int = 40
    large_fraction: float = 0.8
    small_fraction: float = 0.5
    min_class_size: int = 10
    rounds: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.large_fraction < 1.0 and 0.0 < self.small_fraction < 1.0):
            raise ValueError("fractions must be in (0, 1)")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.large_class_threshold < 1 or self.min_class_size < 1:
            raise ValueError("thresholds must be >= 1")


def _parse_label(token: str, line_no: int):
    try:
        value = float(token)
    except ValueError as exc:
        raise ValueError(f"line {line_no}: bad label {token!r}") from exc
    if not value.is_integer():
        raise ValueError(f"line {line_no}: label {token!r} is not an integer")
    return int(value)


def load_sparse_text(path, n_features: int | None = None) -> RawTable:
    """Parse the sparse text format; absent indices are zeros, not missing."""
    labels = []
    entries = []  # per row: list of (0-based index, value)
    max_index = 0
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_label(tokens[0], line_no))
            row = []
            prev_index = 0
            for token in tokens[1:]:
                parts = token.split(":")
                if len(parts) != 2:
                    raise ValueError(f"line {line_no}: malformed pair {token!r}")
                try:
                    index = int(parts[0])
                    value = float(parts[1])
                except ValueError as exc:
                    raise ValueError(f"line {line_no}: malformed pair {token!r}") from exc
                if index < 1:
                    raise ValueError(f"line {line_no}: index {index} is not 1-based")
                if index <= prev_index:
                    raise ValueError(
                        f"line {line_no}: indices must be strictly ascending"
                    )
                prev_index = index
                row.append((index - 1, value))
            max_index = max(max_index, prev_index)
            entries.append(row)
    m = n_features if n_features is not None else max_index
    if n_features is not None and max_index > n_features:
        raise ValueError(f"file uses index {max_index} > n_features {n_features}")
    rows = np.zeros((len(entries), m))
    for i, row in enumerate(entries):
        for j, value in row:
            rows[i, j] = value
    return RawTable(
        rows=rows,
        missing=np.zeros_like(rows, dtype=bool),
        labels=np.array(labels, dtype=int),
    )


def write_sparse_text(path, features, labels) -> None:
    """Write the sparse text format with full round-trip float precision."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    with open(path, "w", encoding="ascii") as fh:
        for row, label in zip(features, labels):
            parts = [str(int(label))]
            for j in np.nonzero(row)[0]:
                parts.append(f"{j + 1}:{float(row[j])!r}")
            fh.write(" ".join(parts) + "\n")


def load_dense_csv(path, label_column: str = "label") -> RawTable:
    """Dense CSV with header; '?' or empty cells are missing values."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if label_column not in header:
            raise ValueError(f"no {label_column!r} column in header {header}")
        label_idx = header.index(label_column)
        feature_names = tuple(name for i, name in enumerate(header) if i != label_idx)
        rows, mask, labels = [], [], []
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise ValueError(
                    f"line {line_no}: {len(cells)} cells for {len(header)} columns"
                )
            labels.append(_parse_label(cells[label_idx], line_no))
            row, miss = [], []
            for i, cell in enumerate(cells):
                if i == label_idx:
                    continue
                cell = cell.strip()
                if cell in ("?", ""):
                    row.append(np.nan)
                    miss.append(True)
                else:
                    row.append(float(cell))
                    miss.append(False)
            rows.append(row)
            mask.append(miss)
    return RawTable(
        rows=np.array(rows, dtype=float),
        missing=np.array(mask, dtype=bool),
        labels=np.array(labels, dtype=int),
        feature_names=feature_names,
    )


def load_arrhythmia(path) -> RawTable:
    """UCI arrhythmia file: no header, '?' missing, class id in the last column."""
    rows, mask, labels = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            labels.append(_parse_label(cells[-1], line_no))
            row, miss = [], []
            for cell in cells[:-1]:
                cell = cell.strip()
                if cell == "?":
                    row.append(np.nan)
                    miss.append(True)
                else:
                    row.append(float(cell))
                    miss.append(False)
            rows.append(row)
            mask.append(miss)
    return RawTable(
        rows=np.array(rows, dtype=float),
        missing=np.array(mask, dtype=bool),
        labels=np.array(labels, dtype=int),
    )


def clean_arrhythmia(
    table: RawTable,
    min_class_size: int = 10,
    max_missing_fraction: float = 0.5,
) -> RawTable:
    """Cleaning pipeline: drop constant and mostly-missing columns, impute the
    rest with column means, drop rare classes, z-score normalize.

    Surviving feature and class counts are logged rather than asserted, so a
    run on the real file makes any deviation from the published table shape
    visible.  The transform is idempotent.
    """
    rows = table.rows.copy()
    mask = table.missing.copy()
    labels = np.asarray(table.labels)
    names = list(table.feature_names) if table.feature_names else None

    observed = np.where(mask, np.nan, rows)
    keep = []
    for j in range(rows.shape[1]):
        col = observed[:, j]
        vals = col[~np.isnan(col)]
        if vals.size == 0 or np.all(vals == vals[0]):
            continue  # constant or fully missing
        if np.mean(mask[:, j]) > max_missing_fraction:
            continue
        keep.append(j)
    rows = rows[:, keep]
    mask = mask[:, keep]
    if names is not None:
        names = [names[j] for j in keep]

    # Mean imputation over observed values.
    for j in range(rows.shape[1]):
        miss = mask[:, j]
        if np.any(miss):
            rows[miss, j] = rows[~miss, j].mean()

    classes, counts = np.unique(labels, return_counts=True)
    survivors = classes[counts >= min_class_size]
    row_keep = np.isin(labels, survivors)
    rows = rows[row_keep]
    labels = labels[row_keep]

    # z-score; a column that became constant on the surviving rows is useless
    # and gets dropped here, which keeps the transform idempotent.
    if rows.shape[0] > 0:
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        nontrivial = std > 1e-12
        rows = (rows[:, nontrivial] - mean[nontrivial]) / std[nontrivial]
        if names is not None:
            names = [n for n, ok in zip(names, nontrivial) if ok]

    if rows.size == 0:
        logger.warning("cleaning produced an empty table")
    logger.info(
        "cleaned table: %d instances, %d features, %d classes",
        rows.shape[0],
        rows.shape[1],
        survivors.size,
    )
    return RawTable(
        rows=rows,
        missing=np.zeros_like(rows, dtype=bool),
        labels=labels,
        feature_names=tuple(names) if names is not None else None,
    )


def stratified_split(labels, spec: SplitSpec, round_index: int):
    """Per-class sampling without replacement; returns (train_idx, test_idx).

    The per-class training share is ceil(fraction * count) clamped so both
    sides stay non-empty.  The draw is seeded from (spec.seed, round_index):
    the same pair always reproduces the same split.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng([spec.seed, int(round_index)])
    train_parts = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        count = idx.size
        if count < 2:
            raise ValueError(f"class {c} has a single instance and cannot be split")
        fraction = (
            spec.large_fraction
            if count > spec.large_class_threshold
            else spec.small_fraction
        )
        n_train = min(max(math.ceil(fraction * count), 1), count - 1)
        train_parts.append(rng.choice(idx, size=n_train, replace=False))
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.setdiff1d(np.arange(labels.shape[0]), train_idx)
    return train_idx, test_idx


def add_gaussian_noise(features, sigma: float, seed) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise to every entry; sigma 0 is a no-op."""
    features = np.asarray(features, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return features.copy()
    rng = np.random.default_rng(seed)
    return features + rng.normal(0.0, sigma, size=features.shape)


def pca_project(features, out_dim: int):
    """Center, project onto the top out_dim covariance eigenvectors.

    Returns (projected N x k, basis m x k with orthonormal columns, mean m).
    New data projects as (x - mean) @ basis.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be 2-d")
    n, m = x.shape
    if not (1 <= out_dim <= min(n, m)):
        raise ValueError(f"out_dim must be in [1, {min(n, m)}], got {out_dim}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:out_dim]
    basis = evecs[:, order]
    # Fix each eigenvector's sign so the result does not depend on the
    # eigensolver's arbitrary choice.
    for j in range(basis.shape[1]):
        pivot = np.argmax(np.abs(basis[:, j]))
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]
    return centered @ basis, basis, mean


def _read_idx(path) -> tuple[int, tuple[int, ...], bytes]:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4:
            raise ValueError(f"{path}: truncated IDX header")
        magic = struct.unpack(">I", head)[0]
        n_dims = magic & 0xFF
        dims = struct.unpack(f">{n_dims}I", fh.read(4 * n_dims))
        payload = fh.read()
    return magic, dims, payload


def load_idx_images(path) -> np.ndarray:
    """IDX image file -> (N, rows*cols) float matrix scaled to [0, 1]."""
    magic, dims, payload = _read_idx(path)
    if magic != 0x00000803:
        raise ValueError(f"{path}: bad image magic 0x{magic:08x}")
    n, rows, cols = dims
    data = np.frombuffer(payload, dtype=np.uint8)
    if data.size != n * rows * cols:
        raise ValueError(f"{path}: payload size mismatch")
    return data.reshape(n, rows * cols).astype(float) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """IDX label file -> integer vector."""
    magic, dims, payload = _read_idx(path)
    if magic != 0x00000801:
        raise ValueError(f"{path}: bad label magic 0x{magic:08x}")
    (n,) = dims
    data = np.frombuffer(payload, dtype=np.uint8)
    if data.size != n:
        raise ValueError(f"{path}: payload size mismatch")
    return data.astype(int)


def download_file(url: str, dest) -> None:
    logger.info("downloading %s -> %s", url, dest)
    with urllib.request.urlopen(url) as response, open(dest, "wb") as fh:
        fh.write(response.read())


def fetch_arrhythmia(dest_dir) -> str:
    """Download the UCI arrhythmia table into dest_dir; returns the file path."""
    dest = Path(dest_dir) / "arrhythmia.data"
    dest.parent.mkdir(parents=True, exist_ok=True)
    if not dest.exists():
        download_file(ARRHYTHMIA_URL, dest)
    return str(dest)


def fetch_mnist(dest_dir) -> dict:
    """Download the four MNIST IDX files into dest_dir; returns name -> path."""
    out = {}
    Path(dest_dir).mkdir(parents=True, exist_ok=True)
    for name, url in MNIST_URLS.items():
        dest = Path(dest_dir) / name
        if not dest.exists():
            download_file(url, dest)
        out[name] = str(dest)
    return out
