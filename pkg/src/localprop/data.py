"""Datasets: CSV ingestion and small synthetic generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    """``inputs`` is ``(N, d)`` or ``(N, T, d)`` for sequences; ``targets`` is
    ``(N, k)`` (or ``(N, T, k)`` for per-step sequence targets)."""
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DataError(f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets")
        if self.inputs.ndim not in (2, 3) or self.targets.ndim not in (2, 3):
            raise DataError(f"unsupported shapes {self.inputs.shape} / {self.targets.shape}")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_width(self) -> int:
        return self.inputs.shape[-1]

    @property
    def target_width(self) -> int:
        return self.targets.shape[-1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.inputs[rows], self.targets[rows], dict(self.meta))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if np.any(labels != np.round(labels)) or np.any(labels < 0) or np.any(labels >= n_classes):
        bad = labels[(labels != np.round(labels)) | (labels < 0) | (labels >= n_classes)][0]
        raise DataError(f"label {bad} is not a class index in [0, {n_classes})")
    return np.eye(n_classes)[labels.astype(int)]


def _parse_row(row, lineno):
    try:
        return [float(cell) for cell in row]
    except ValueError:
        for col, cell in enumerate(row):
            try:
                float(cell)
            except ValueError:
                raise DataError(f"line {lineno}, column {col + 1}: non-numeric cell {cell!r}")
        raise


def read_csv_matrix(path) -> np.ndarray:
    """Numeric CSV body as a 2-D array; a non-numeric first line is taken as a header."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not rows:
                try:
                    [float(c) for c in row]
                except ValueError:
                    continue
            values = _parse_row(row, lineno)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"line {lineno}: ragged row with {len(values)} fields, expected {width}")
            rows.append(values)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=np.float64)


def load_csv(path, input_cols: Sequence[int], target_cols: Sequence[int],
             one_hot_classes: Optional[int] = None) -> Dataset:
    """Load a dataset; columns are 0-based indices into each row.

    With ``one_hot_classes`` the (single) target column holds class labels
    and is expanded to one-hot vectors.
    """
    m = read_csv_matrix(path)
    input_cols, target_cols = list(input_cols), list(target_cols)
    if m.size == 0:
        tw = one_hot_classes or len(target_cols)
        return Dataset(np.zeros((0, len(input_cols))), np.zeros((0, tw)), {"source": str(path)})
    for c in input_cols + target_cols:
        if not 0 <= c < m.shape[1]:
            raise DataError(f"column {c} out of range for {m.shape[1]}-column file {path}")
    X = m[:, input_cols]
    Y = m[:, target_cols]
    if one_hot_classes is not None:
        if len(target_cols) != 1:
            raise DataError("one-hot encoding needs exactly one label column")
        Y = one_hot(Y[:, 0], one_hot_classes)
    return Dataset(X, Y, {"source": str(path)})


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean, unit-variance inputs (constant features are only centred)."""
    axes = tuple(range(ds.inputs.ndim - 1))
    mu = ds.inputs.mean(axis=axes)
    sd = ds.inputs.std(axis=axes)
    sd[sd == 0] = 1.0
    return Dataset((ds.inputs - mu) / sd, ds.targets.copy(), dict(ds.meta, standardized=True))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_xor() -> Dataset:
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)
    Y = np.array([[0], [1], [1], [0]], dtype=np.float64)
    return Dataset(X, Y, {"source": "xor"})


def gen_two_moons(n: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Two interleaved half circles; labels 0 (upper) and 1 (lower) in one column."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    n_upper = (n + 1) // 2
    n_lower = n - n_upper
    tu = np.linspace(0.0, np.pi, n_upper)
    tl = np.linspace(0.0, np.pi, n_lower)
    upper = np.column_stack([np.cos(tu), np.sin(tu)])
    lower = np.column_stack([1.0 - np.cos(tl), 0.5 - np.sin(tl)])
    X = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n_upper), np.ones(n_lower)])
    if noise > 0:
        X = X + rng.normal(scale=noise, size=X.shape)
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm, None], {"source": "two_moons", "noise": noise, "seed": seed})


def gen_parity_sequences(n: int, T: int, seed: int = 0, per_step: bool = False) -> Dataset:
    """Random bit sequences ``(n, T, 1)``; target is the XOR of all bits.

    With ``per_step`` the targets are the running parity at every step,
    shape ``(n, T, 1)``.
    """
    if n < 1 or T < 1:
        raise DataError("n and T must be >= 1")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n, T))
    running = np.cumsum(bits, axis=1) % 2
    X = bits[:, :, None].astype(np.float64)
    Y = running[:, :, None].astype(np.float64) if per_step else running[:, -1:].astype(np.float64)
    return Dataset(X, Y, {"source": "parity", "T": T, "seed": seed})
