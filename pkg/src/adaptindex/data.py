"""Datasets, CSV ingestion and predictor whitening."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestionError, RankDeficiencyError
from .geometry import retract

__all__ = ["Dataset", "Whitener", "load_dataset", "whiten", "unwhiten_direction"]

SINGULAR_RATIO = 1e-10


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of predictors ``x`` (n x p) and response ``y``."""

    x: np.ndarray
    y: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise IngestionError(f"x must be 2-d, got shape {x.shape}")
        n, p = x.shape
        if y.shape[0] != n:
            raise IngestionError(f"x has {n} rows but y has {y.shape[0]}")
        if p < 2:
            raise IngestionError(f"need at least 2 predictors, got p = {p}")
        if n < p + 2:
            raise IngestionError(f"need n >= p + 2 observations, got n = {n}, p = {p}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise IngestionError("dataset contains non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.standardized)


@dataclass(frozen=True)
class Whitener:
    mean: np.ndarray
    transform: np.ndarray
    inverse_transform: np.ndarray = field(repr=False)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.transform

    @classmethod
    def identity(cls, p: int) -> "Whitener":
        return cls(np.zeros(p), np.eye(p), np.eye(p))


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise IngestionError(f"row {row}, column {col!r}: not a number: {cell!r}") from None
    if not math.isfinite(v):
        raise IngestionError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def load_dataset(source) -> Dataset:
    """Read a CSV with header ``x1,...,xp,y``.

    ``source`` may be a path, a binary or text stream, or raw bytes. Row
    numbers in error messages count the header as row 1.
    """
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as exc:
            raise IngestionError(f"cannot read {os.fspath(source)!r}: {exc.strerror}") from exc
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw

    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestionError("empty CSV input") from None
    p = len(header) - 1
    expected = [f"x{j}" for j in range(1, p + 1)] + ["y"]
    if header != expected:
        raise IngestionError(f"header must be {','.join(expected)}, got {','.join(header)}")
    if p < 2:
        raise IngestionError(f"need at least 2 predictor columns, got p = {p}")

    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != p + 1:
            raise IngestionError(f"row {lineno}: expected {p + 1} fields, got {len(rec)}")
        rows.append([_parse_float(c.strip(), lineno, header[j]) for j, c in enumerate(rec)])
    if len(rows) < p + 2:
        raise IngestionError(f"need n >= p + 2 = {p + 2} rows, got {len(rows)}")
    arr = np.array(rows, dtype=float)
    return Dataset(arr[:, :p], arr[:, p], standardized=False)


def whiten(data: Dataset) -> tuple[Whitener, Dataset]:
    """Center and rotate predictors to identity sample covariance.

    Uses the symmetric inverse square root of the sample covariance
    (``ddof=1``) from its eigendecomposition.
    """
    x = data.x
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (data.n - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    ratio = evals[0] / evals[-1] if evals[-1] > 0 else 0.0
    if ratio <= SINGULAR_RATIO:
        raise RankDeficiencyError(
            f"sample covariance is near-singular (eigenvalue ratio {ratio:.3e})", ratio=ratio
        )
    transform = (evecs / np.sqrt(evals)) @ evecs.T
    inverse = (evecs * np.sqrt(evals)) @ evecs.T
    transform = 0.5 * (transform + transform.T)
    inverse = 0.5 * (inverse + inverse.T)
    w = Whitener(mean, transform, inverse)
    return w, Dataset(xc @ transform, data.y, standardized=True)


def unwhiten_direction(w: Whitener, beta_z) -> np.ndarray:
    """Map a direction in whitened coordinates to original predictor units.

    ``beta_z^T z = (S^{-1/2} beta_z)^T (x - mean)``, so the original-scale
    direction is proportional to ``transform @ beta_z``.
    """
    return retract(w.transform @ np.asarray(beta_z, dtype=float))
