"""CSV ingestion, block pooling and result documents."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

FORMAT_VERSION = "1"

__all__ = [
    "SampleFormatError",
    "load_sample",
    "save_sample",
    "format_csv",
    "block_average",
    "BlockAverager",
    "ResultDocument",
]


class SampleFormatError(ValueError):
    """A sample file is malformed; the message names the offending row."""


def load_sample(path, has_header=False, delimiter=",", min_rows=2) -> np.ndarray:
    """Read a CSV of reals; rows are observations, columns coordinates.

    Parameters
    ----------
    path : str or path-like
    has_header : bool, default=False
        Skip the first line.
    delimiter : str, default=","
    min_rows : int, default=2

    Returns
    -------
    ndarray of shape (n, p)

    Raises
    ------
    SampleFormatError
        Ragged or non-numeric rows (reported with 1-based file line numbers),
        non-finite values, or fewer than ``min_rows`` data rows.
    """
    if len(delimiter) != 1:
        raise ValueError("delimiter must be a single character")
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, fields in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise SampleFormatError(f"{path}: row {lineno} has {len(fields)} fields, expected {width}")
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise SampleFormatError(f"{path}: row {lineno} has a non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise SampleFormatError(f"{path}: row {lineno} has a non-finite value")
            rows.append(vals)
    if len(rows) < min_rows:
        raise SampleFormatError(f"{path}: need at least {min_rows} data rows, found {len(rows)}")
    return np.array(rows, dtype=float)


def format_csv(A, header=None) -> str:
    """Render a matrix as CSV with round-trip exact (repr) floats."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in A:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def save_sample(path, A, header=None):
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(A, header))


def block_average(A, row_block, col_block) -> np.ndarray:
    """Average non-overlapping ``row_block x col_block`` blocks of consecutive indices.

    Flattening the result row-major gives the pooled feature vector.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("input must be a 2-D matrix")
    if row_block < 1 or col_block < 1:
        raise ValueError("block sizes must be positive")
    r, c = A.shape
    if r % row_block or c % col_block:
        raise ValueError(f"a {r}x{c} matrix cannot be split into {row_block}x{col_block} blocks")
    return A.reshape(r // row_block, row_block, c // col_block, col_block).mean(axis=(1, 3))


class BlockAverager(TransformerMixin, BaseEstimator):
    """Pool each observation's ``(n_rows, n_cols)`` grid by block averaging.

    Every row of ``X`` is one observation flattened row-major from a
    ``grid_shape`` matrix (for example time points x electrodes). The output
    row is the flattened block-averaged grid.

    Parameters
    ----------
    grid_shape : tuple of int
    row_block, col_block : int
    """

    def __init__(self, grid_shape=(256, 64), row_block=4, col_block=4):
        self.grid_shape = grid_shape
        self.row_block = row_block
        self.col_block = col_block

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        r, c = self.grid_shape
        if X.shape[1] != r * c:
            raise ValueError(f"rows must have {r * c} entries for grid {self.grid_shape}, got {X.shape[1]}")
        if r % self.row_block or c % self.col_block:
            raise ValueError("block sizes must divide the grid shape")
        self.n_features_in_ = X.shape[1]
        self.pooled_shape_ = (r // self.row_block, c // self.col_block)
        return self

    def transform(self, X):
        X = check_array(X, dtype=np.float64)
        r, c = self.grid_shape
        if X.shape[1] != r * c:
            raise ValueError(f"rows must have {r * c} entries, got {X.shape[1]}")
        G = X.reshape(-1, r // self.row_block, self.row_block, c // self.col_block, self.col_block)
        return G.mean(axis=(2, 4)).reshape(X.shape[0], -1)


@dataclass
class ResultDocument:
    """Serializable record of one test run.

    ``metadata`` carries run-dependent fields such as wall time; everything
    else is reproducible from the inputs and the seed.
    """

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    n_boot: int
    seed: int
    diagnostics: dict
    degenerate: bool = False
    format_version: str = FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, result, config, diag, metadata=None):
        return cls(
            statistic=result.statistic,
            critical_value=result.critical_value,
            p_value=result.p_value,
            reject=result.reject,
            alpha=config.alpha,
            n_boot=config.n_boot,
            seed=config.seed,
            diagnostics=diag.to_dict(),
            degenerate=result.degenerate,
            metadata=dict(metadata or {}),
        )

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
        return cls(**d)
