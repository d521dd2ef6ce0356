"""Synthetic data generators and CSV / libsvm readers and writers."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import DataMatrix


class DataFormatError(ValueError):
    """A dataset file could not be parsed."""


def two_rings(n: int, noise: float, rng: np.random.Generator, radii=(1.0, 4.0)) -> DataMatrix:
    """Two concentric circles with Gaussian radial noise; labels 0 (inner) and 1 (outer).

    The inner ring gets ceil(n/2) points.
    """
    if n < 2:
        raise ValueError("two_rings needs n >= 2")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    sizes = (n - n // 2, n // 2)
    pts, labels = [], []
    for label, (size, r) in enumerate(zip(sizes, radii)):
        theta = rng.uniform(0.0, 2.0 * math.pi, size)
        rad = r + noise * rng.standard_normal(size) if noise > 0 else np.full(size, float(r))
        pts.append(np.column_stack([rad * np.cos(theta), rad * np.sin(theta)]))
        labels.append(np.full(size, label))
    return DataMatrix(np.vstack(pts), np.concatenate(labels))


def gaussian_blobs(n: int, noise: float, rng: np.random.Generator, centers: int = 3, d: int = 2,
                   spread: float = 10.0) -> DataMatrix:
    """Isotropic Gaussian blobs (std ``noise``) around centers drawn in [-spread, spread]^d."""
    if n < 2:
        raise ValueError("gaussian_blobs needs n >= 2")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    mu = rng.uniform(-spread, spread, size=(centers, d))
    labels = np.arange(n) % centers
    values = mu[labels] + noise * rng.standard_normal((n, d))
    return DataMatrix(values, labels)


GENERATORS = {"two_rings": two_rings, "gaussian_blobs": gaussian_blobs}


def generate_synthetic(kind: str, n: int, noise: float, rng: np.random.Generator, **kwargs) -> DataMatrix:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown synthetic generator {kind!r}; expected one of {sorted(GENERATORS)}") from None
    return gen(n, noise, rng, **kwargs)


def load_dataset(path, fmt: str | None = None, labels: bool | None = None, n_features: int | None = None) -> DataMatrix:
    """Read a dense DataMatrix from ``csv`` or ``libsvm`` text.

    CSV: numeric columns, no header. With ``labels=True`` the last column is an
    integer class label. With ``labels=None`` that happens only when the first
    line is a ``# labels ...`` comment, as written by :func:`save_dataset`.
    libsvm: ``label idx:value ...`` with 1-based feature indices.
    """
    path = Path(path)
    fmt = fmt or ("libsvm" if path.suffix in (".libsvm", ".svm") else "csv")
    text = path.read_text().splitlines()
    if fmt == "csv":
        return _read_csv(text, labels)
    if fmt == "libsvm":
        return _read_libsvm(text, n_features)
    raise ValueError(f"unknown dataset format {fmt!r}")


def _read_csv(lines, labels) -> DataMatrix:
    rows = []
    width = None
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if lineno == 1 and labels is None and s.lstrip("# ").lower().startswith("labels"):
                labels = True
            continue
        fields = [f.strip() for f in s.split(",")]
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric field in {s!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"line {lineno}: expected {width} fields, found {len(row)}")
        rows.append(row)
    if not rows:
        raise DataFormatError("no data rows")
    M = np.asarray(rows, dtype=np.float64)
    if labels:
        if M.shape[1] < 2:
            raise DataFormatError("a labelled CSV needs at least one feature column")
        lab = M[:, -1]
        if not np.all(lab == np.round(lab)):
            raise DataFormatError("label column holds non-integer values")
        return DataMatrix(M[:, :-1], lab.astype(np.int64))
    return DataMatrix(M)


def _read_libsvm(lines, n_features) -> DataMatrix:
    entries, labels = [], []
    d = 0
    for lineno, line in enumerate(lines, 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        parts = s.split()
        try:
            label = float(parts[0])
            row = {}
            for tok in parts[1:]:
                k, v = tok.split(":", 1)
                k = int(k)
                if k < 1:
                    raise ValueError
                row[k - 1] = float(v)
        except ValueError:
            raise DataFormatError(f"line {lineno}: malformed libsvm record {s!r}") from None
        labels.append(label)
        entries.append(row)
        if row:
            d = max(d, max(row) + 1)
    if not entries:
        raise DataFormatError("no data rows")
    if n_features is not None:
        if d > n_features:
            raise DataFormatError(f"feature index {d} exceeds n_features={n_features}")
        d = n_features
    M = np.zeros((len(entries), max(d, 1)))
    for i, row in enumerate(entries):
        for k, v in row.items():
            M[i, k] = v
    lab = np.asarray(labels)
    if np.all(lab == np.round(lab)):
        lab = lab.astype(np.int64)
    return DataMatrix(M, lab)


def save_dataset(X: DataMatrix, path, fmt: str = "csv") -> None:
    """Write X so that load_dataset reads back bit-identical values (repr round-trip)."""
    path = Path(path)
    with path.open("w") as fh:
        if fmt == "csv":
            if X.labels is not None:
                fh.write("# labels in last column\n")
            for i in range(X.n):
                fields = [repr(float(v)) for v in X.values[i]]
                if X.labels is not None:
                    fields.append(str(int(X.labels[i])))
                fh.write(",".join(fields) + "\n")
        elif fmt == "libsvm":
            for i in range(X.n):
                label = int(X.labels[i]) if X.labels is not None else 0
                toks = [f"{k + 1}:{float(v)!r}" for k, v in enumerate(X.values[i]) if v != 0]
                fh.write(" ".join([str(label), *toks]) + "\n")
        else:
            raise ValueError(f"unknown dataset format {fmt!r}")
