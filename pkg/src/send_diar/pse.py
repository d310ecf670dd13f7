"""Power-set encoding of speaker subsets.

Speakers are numbered 1..N following their slot order in the speaker bank.
A subset S is encoded as ``sum(2**(n-1) for n in S)``; the empty set is 0.
Only subsets with at most K members are valid output classes. Class indices
are positions in the ascending code list, so class 0 is always silence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable

import numpy as np

MAX_CAPACITY = 62


class LabelOverflowError(ValueError):
    """A frame has more simultaneous speakers than the table allows."""


def _check_capacity(n: int) -> None:
    if not 0 <= n <= MAX_CAPACITY:
        raise ValueError(f"capacity must be in 0..{MAX_CAPACITY}, got {n}")


def encode(speakers: Iterable[int], n: int) -> int:
    _check_capacity(n)
    code = 0
    for s in set(speakers):
        if not 1 <= s <= n:
            raise ValueError(f"speaker {s} outside 1..{n}")
        code |= 1 << (s - 1)
    return code


def decode(code: int, n: int) -> frozenset[int]:
    _check_capacity(n)
    if not 0 <= code < (1 << n):
        raise ValueError(f"code {code} outside 0..2**{n}-1")
    return frozenset(i + 1 for i in range(n) if code >> i & 1)


def num_valid_labels(k: int, n: int) -> int:
    return sum(comb(n, j) for j in range(min(k, n) + 1))


@dataclass(frozen=True)
class ValidLabelTable:
    max_overlap: int
    capacity: int
    codes: np.ndarray  # ascending int64
    code_to_class: dict[int, int] = field(repr=False)
    # class x capacity multi-hot matrix, row c is the speaker set of class c
    activity: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.codes)

    def class_of(self, code: int) -> int:
        try:
            return self.code_to_class[code]
        except KeyError:
            raise KeyError(f"code {code} is not a valid label (K={self.max_overlap})") from None

    def speakers(self, cls: int) -> frozenset[int]:
        return decode(int(self.codes[cls]), self.capacity)


def build_valid_table(k: int, n: int) -> ValidLabelTable:
    _check_capacity(n)
    if not 0 <= k <= n:
        raise ValueError(f"max overlap must be in 0..{n}, got {k}")
    codes = sorted(
        encode(subset, n)
        for size in range(k + 1)
        for subset in combinations(range(1, n + 1), size)
    )
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return ValidLabelTable(
        max_overlap=k,
        capacity=n,
        codes=codes,
        code_to_class={int(c): i for i, c in enumerate(codes)},
        activity=bits.astype(np.int64),
    )


def _frame_codes(labels: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.int64(1), np.arange(labels.shape[1], dtype=np.int64))
    return labels.astype(np.int64) @ weights


def labels_to_classes(labels, table: ValidLabelTable, policy: str = "reject",
                      priority=None) -> np.ndarray:
    """Map a T x N multi-hot matrix to T class indices.

    ``policy`` decides frames with more than K active speakers: ``"reject"``
    raises, ``"truncate"`` keeps the first K active speakers in ``priority``
    order (a permutation of 0..N-1; default slot order).
    """
    y = np.asarray(labels)
    if y.ndim != 2 or y.shape[1] != table.capacity:
        raise ValueError(f"labels shape {y.shape} does not match capacity {table.capacity}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    y = y.astype(np.int64)
    counts = y.sum(axis=1)
    over = np.flatnonzero(counts > table.max_overlap)
    if over.size:
        if policy == "reject":
            raise LabelOverflowError(
                f"frame {over[0]} has {counts[over[0]]} active speakers, max is {table.max_overlap}")
        if policy != "truncate":
            raise ValueError(f"unknown overflow policy {policy!r}")
        order = np.arange(table.capacity) if priority is None else np.asarray(priority)
        y = y.copy()
        for t in over:
            active = [s for s in order if y[t, s]]
            y[t, active[table.max_overlap:]] = 0
    return np.searchsorted(table.codes, _frame_codes(y)).astype(np.int64)


def classes_to_labels(classes, table: ValidLabelTable) -> np.ndarray:
    c = np.asarray(classes, dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= len(table)):
        raise IndexError(f"class index outside 0..{len(table) - 1}")
    return table.activity[c]
