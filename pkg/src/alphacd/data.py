"""Readers for the text data formats accepted by the command line.

* coordinate list: first line ``m N nnz``, then ``row col value`` triples,
  1-indexed;
* targets: one real per line;
* sparse rows: ``label idx:val idx:val ...`` per line, 1-indexed features.

Blank lines and lines starting with ``#`` or ``%`` are skipped.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

__all__ = ["DataFormatError", "read_coo", "read_targets", "read_sparse_rows",
           "sniff_format", "normalize_columns"]


class DataFormatError(ValueError):
    """A malformed data file; ``line`` is 1-based."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _content_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and line[0] not in "#%":
                yield lineno, line


def sniff_format(path) -> str:
    for _, line in _content_lines(path):
        return "libsvm" if ":" in line else "coo"
    raise DataFormatError(path, 1, "empty data file")


def read_coo(path) -> sparse.csr_matrix:
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise DataFormatError(path, 1, "empty data file") from None
    try:
        m, N, nnz = (int(t) for t in header.split())
    except ValueError:
        raise DataFormatError(path, lineno, "header must be 'm N nnz'") from None
    rows, cols, vals = [], [], []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(path, lineno, "expected 'row col value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise DataFormatError(path, lineno, "expected 'row col value'") from None
        if not (1 <= i <= m and 1 <= j <= N):
            raise DataFormatError(path, lineno, f"index ({i}, {j}) outside {m}x{N}")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if len(vals) != nnz:
        raise DataFormatError(path, lineno, f"header announces {nnz} entries, found {len(vals)}")
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, N))


def read_targets(path) -> np.ndarray:
    out = []
    for lineno, line in _content_lines(path):
        try:
            out.append(float(line))
        except ValueError:
            raise DataFormatError(path, lineno, f"not a number: {line!r}") from None
    return np.array(out)


def read_sparse_rows(path, n_features=None):
    """Returns ``(A, labels)`` from a ``label idx:val`` file."""
    labels, rows, cols, vals = [], [], [], []
    for lineno, line in _content_lines(path):
        parts = line.split()
        try:
            labels.append(float(parts[0]))
            for item in parts[1:]:
                idx, val = item.split(":")
                j = int(idx)
                if j < 1:
                    raise ValueError
                rows.append(len(labels) - 1)
                cols.append(j - 1)
                vals.append(float(val))
        except ValueError:
            raise DataFormatError(path, lineno, "expected 'label idx:val ...'") from None
    N = n_features or (max(cols) + 1 if cols else 0)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(labels), N))
    return A, np.array(labels)


def normalize_columns(A):
    """Scale each column to unit Euclidean norm (zero columns untouched)."""
    A = sparse.csc_matrix(A, dtype=float)
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=0))).ravel()
    norms[norms == 0] = 1.0
    return (A @ sparse.diags(1.0 / norms)).tocsr()
