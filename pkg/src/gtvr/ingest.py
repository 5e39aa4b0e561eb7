"""LIBSVM-format parsing, label normalization, and sample partitioning.

Grammar per data line: ``<label> <idx>:<val> <idx>:<val> ...`` with
strictly increasing 1-based indices; ``#`` starts a comment that runs to
the end of the line. Feature indices are normalized to 0-based storage.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np
import scipy.sparse as sp

from .rng import PURPOSE_PARTITION, derived_generator

log = logging.getLogger(__name__)

PARTITION_SCHEMES = ("contiguous", "round_robin", "shuffled")

_TOKEN = re.compile(r"\S+")


class LibsvmFormatError(ValueError):
    """Malformed dataset text; the message names line and column."""


@dataclass
class RawDataset:
    """Parsed rows as (0-based index array, value array) pairs."""

    rows: list[tuple[np.ndarray, np.ndarray]]
    labels: np.ndarray
    d: int

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def to_csr(self) -> sp.csr_matrix:
        indptr = np.zeros(len(self.rows) + 1, dtype=np.int64)
        for r, (idx, _) in enumerate(self.rows):
            indptr[r + 1] = indptr[r] + len(idx)
        indices = np.concatenate([idx for idx, _ in self.rows]) if self.rows else np.empty(0, np.int32)
        data = np.concatenate([val for _, val in self.rows]) if self.rows else np.empty(0)
        return sp.csr_matrix((data, indices, indptr), shape=(len(self.rows), self.d))


def _fail(line_no: int, col: int, message: str) -> None:
    raise LibsvmFormatError(f"line {line_no}, column {col}: {message}")


def parse_libsvm(source: str | Path | IO[str], declared_d: int | None = None) -> RawDataset:
    """Parse LIBSVM text into a RawDataset.

    ``declared_d`` can widen the feature dimension beyond the largest
    index seen; the effective dimension is the max of the two. Blank
    lines and trailing whitespace are tolerated; duplicate or decreasing
    indices are rejected because silently deduplicating them would
    corrupt every gradient computed from the row.
    """
    if declared_d is not None and declared_d < 1:
        raise ValueError(f"declared dimension must be positive, got {declared_d}")
    if isinstance(source, (str, Path)):
        with open(source, "r") as fh:
            return parse_libsvm(fh, declared_d)

    rows: list[tuple[np.ndarray, np.ndarray]] = []
    labels: list[float] = []
    max_index = 0
    for line_no, line in enumerate(source, start=1):
        body = line.split("#", 1)[0]
        tokens = list(_TOKEN.finditer(body))
        if not tokens:
            continue
        label_tok = tokens[0]
        try:
            label = float(label_tok.group())
        except ValueError:
            _fail(line_no, label_tok.start() + 1, f"bad label {label_tok.group()!r}")
        idxs: list[int] = []
        vals: list[float] = []
        prev = 0
        for tok in tokens[1:]:
            col = tok.start() + 1
            text = tok.group()
            idx_str, sep, val_str = text.partition(":")
            if not sep or not idx_str or not val_str:
                _fail(line_no, col, f"expected <index>:<value>, got {text!r}")
            try:
                idx = int(idx_str)
            except ValueError:
                _fail(line_no, col, f"bad feature index {idx_str!r}")
            if idx < 1:
                _fail(line_no, col, f"feature indices are 1-based, got {idx}")
            if idx <= prev:
                _fail(line_no, col, f"feature index {idx} not increasing (previous {prev})")
            try:
                val = float(val_str)
            except ValueError:
                _fail(line_no, col, f"bad feature value {val_str!r}")
            idxs.append(idx - 1)
            vals.append(val)
            prev = idx
        max_index = max(max_index, prev)
        rows.append((np.array(idxs, dtype=np.int32), np.array(vals)))
        labels.append(label)

    if not rows:
        raise LibsvmFormatError("line 1, column 1: no data rows found")
    return RawDataset(rows=rows, labels=np.array(labels), d=max(max_index, declared_d or 0))


def serialize_libsvm(raw: RawDataset, sink: str | Path | IO[str]) -> None:
    """Re-emit a dataset in LIBSVM text form (lossless for 64-bit values)."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w") as fh:
            serialize_libsvm(raw, fh)
            return
    for label, (idx, val) in zip(raw.labels, raw.rows):
        parts = [f"{label:.17g}"]
        parts.extend(f"{i + 1}:{v:.17g}" for i, v in zip(idx, val))
        sink.write(" ".join(parts) + "\n")


def to_binary_labels(raw: RawDataset) -> RawDataset:
    """Map the two observed label values onto {-1, +1}.

    Supported conventions: {-1, +1} kept, {0, 1} -> {-1, +1}, and the
    covtype-style {1, 2} -> {+1, -1}.
    """
    distinct = np.unique(raw.labels)
    if len(distinct) != 2:
        raise ValueError(
            f"need exactly two distinct label values, found {distinct.tolist()}"
        )
    key = tuple(distinct.tolist())
    mappings = {
        (-1.0, 1.0): {-1.0: -1.0, 1.0: 1.0},
        (0.0, 1.0): {0.0: -1.0, 1.0: 1.0},
        (1.0, 2.0): {1.0: 1.0, 2.0: -1.0},
    }
    if key not in mappings:
        raise ValueError(f"no {{-1,+1}} convention for label values {list(key)}")
    mapping = mappings[key]
    log.info("label mapping: %s", {k: mapping[k] for k in key})
    labels = np.array([mapping[l] for l in raw.labels])
    return RawDataset(rows=raw.rows, labels=labels, d=raw.d)


def _balanced_sizes(total: int, n: int) -> list[int]:
    base, extra = divmod(total, n)
    return [base + 1] * extra + [base] * (n - extra)


def partition(
    raw: RawDataset,
    n: int,
    scheme: str = "shuffled",
    seed: int = 0,
) -> list[np.ndarray]:
    """Assign every sample to exactly one agent, balanced to within one.

    Returns per-agent row-index arrays. ``shuffled`` applies a seeded
    permutation before the contiguous split and is deterministic for a
    fixed seed.
    """
    total = raw.num_rows
    if n < 1 or n > total:
        raise ValueError(f"cannot split {total} samples across {n} agents")
    if scheme == "contiguous":
        order = np.arange(total, dtype=np.int64)
    elif scheme == "round_robin":
        return [np.arange(i, total, n, dtype=np.int64) for i in range(n)]
    elif scheme == "shuffled":
        order = derived_generator(seed, 0, PURPOSE_PARTITION).permutation(total)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}, expected one of {PARTITION_SCHEMES}")
    out = []
    start = 0
    for size in _balanced_sizes(total, n):
        out.append(np.asarray(order[start : start + size], dtype=np.int64))
        start += size
    return out


def take_head(raw: RawDataset, max_samples: int) -> RawDataset:
    """Deterministic desk-scale cap: keep the first max_samples rows."""
    if max_samples < 1:
        raise ValueError(f"max_samples must be positive, got {max_samples}")
    if max_samples >= raw.num_rows:
        return raw
    return RawDataset(rows=raw.rows[:max_samples], labels=raw.labels[:max_samples], d=raw.d)
