"""Frame-level DER and word-level DER.

Per scored frame with ``r`` reference speakers, ``h`` hypothesis speakers
and ``c`` correctly matched speakers::

    miss = max(0, r - h)   false_alarm = max(0, h - r)   confusion = min(r, h) - c

summed over frames and divided by the total reference speaker-frames. The
hypothesis columns are expected in the same speaker order as the reference
(bank order), so ``c`` is the size of the per-frame intersection. No collar.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

MODES = ("full", "ignore_overlap")


@dataclass(frozen=True)
class DerReport:
    der: float
    miss: float
    false_alarm: float
    confusion: float
    scored_time: int
    mode: str

    def to_record(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def __str__(self):
        return (f"DER {100 * self.der:6.2f}%  (miss {100 * self.miss:.2f}%, "
                f"fa {100 * self.false_alarm:.2f}%, conf {100 * self.confusion:.2f}%) "
                f"over {self.scored_time} frames [{self.mode}]")


@dataclass(frozen=True)
class WderReport:
    wder: float
    total_words: int
    wrong_words: int

    def to_record(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def __str__(self):
        return f"wDER {100 * self.wder:6.2f}%  ({self.wrong_words}/{self.total_words} words)"


def _normalize_mode(mode: str) -> str:
    if mode == "ignore":
        mode = "ignore_overlap"
    if mode not in MODES:
        raise ValueError(f"unknown scoring mode {mode!r}")
    return mode


def _prepare(ref, hyp, mode):
    ref = np.asarray(ref)
    hyp = np.asarray(hyp)
    if ref.ndim != 2 or ref.shape != hyp.shape:
        raise ValueError(f"reference {ref.shape} and hypothesis {hyp.shape} must be equal T x N matrices")
    return (ref != 0).astype(np.int64), (hyp != 0).astype(np.int64), _normalize_mode(mode)


def _report(miss, fa, conf, total, scored, mode) -> DerReport:
    if total == 0:
        raise ValueError("reference has no speech in the scored region; DER is undefined")
    return DerReport((miss + fa + conf) / total, miss / total, fa / total, conf / total, scored, mode)


def der(ref, hyp, mode: str = "full") -> DerReport:
    ref, hyp, mode = _prepare(ref, hyp, mode)
    n_ref = ref.sum(axis=1)
    keep = n_ref < 2 if mode == "ignore_overlap" else np.ones(len(ref), dtype=bool)
    ref, hyp, n_ref = ref[keep], hyp[keep], n_ref[keep]
    n_hyp = hyp.sum(axis=1)
    correct = (ref & hyp).sum(axis=1)
    miss = np.maximum(n_ref - n_hyp, 0).sum()
    fa = np.maximum(n_hyp - n_ref, 0).sum()
    conf = (np.minimum(n_ref, n_hyp) - correct).sum()
    return _report(int(miss), int(fa), int(conf), int(n_ref.sum()), int(keep.sum()), mode)


def der_bruteforce_oracle(ref, hyp, mode: str = "full") -> DerReport:
    """Frame-by-frame reference path: tries every pairing of reference and
    hypothesis speakers and keeps the one with the most identical pairs."""
    ref, hyp, mode = _prepare(ref, hyp, mode)
    miss = fa = conf = total = scored = 0
    for r_row, h_row in zip(ref.tolist(), hyp.tolist()):
        r_set = [i for i, v in enumerate(r_row) if v]
        h_set = [i for i, v in enumerate(h_row) if v]
        if mode == "ignore_overlap" and len(r_set) >= 2:
            continue
        scored += 1
        total += len(r_set)
        small, large = sorted((r_set, h_set), key=len)
        best = 0
        for chosen in permutations(large, len(small)):
            best = max(best, sum(1 for a, b in zip(small, chosen) if a == b))
        if len(r_set) > len(h_set):
            miss += len(r_set) - len(h_set)
        else:
            fa += len(h_set) - len(r_set)
        conf += len(small) - best
    return _report(miss, fa, conf, total, scored, mode)


def optimal_mapping(ref, hyp) -> np.ndarray:
    """Column order for ``hyp`` maximizing total agreement with ``ref`` (Hungarian).

    Returns hyp reordered to ref's columns; unmatched hyp columns are appended,
    and ref is expected to be padded by the caller if hyp has more speakers.
    """
    ref = (np.asarray(ref) != 0).astype(np.int64)
    hyp = (np.asarray(hyp) != 0).astype(np.int64)
    if len(ref) != len(hyp):
        raise ValueError("reference and hypothesis differ in frame count")
    width = max(ref.shape[1], hyp.shape[1])
    ref_p = np.pad(ref, ((0, 0), (0, width - ref.shape[1])))
    hyp_p = np.pad(hyp, ((0, 0), (0, width - hyp.shape[1])))
    rows, cols = linear_sum_assignment(-(ref_p.T @ hyp_p))
    out = np.zeros_like(hyp_p)
    out[:, rows] = hyp_p[:, cols]
    return out


def der_with_mapping(ref, hyp, mode: str = "full") -> DerReport:
    """DER after the best global speaker mapping, for hypotheses not in bank order."""
    ref = np.asarray(ref)
    mapped = optimal_mapping(ref, hyp)
    ref_p = np.pad(ref, ((0, 0), (0, mapped.shape[1] - ref.shape[1])))
    return der(ref_p, mapped, mode)


def wder(ref_speakers, hyp_speakers) -> WderReport:
    ref = list(ref_speakers)
    hyp = list(hyp_speakers)
    if len(ref) != len(hyp):
        raise ValueError(f"{len(ref)} reference words vs {len(hyp)} hypothesis words")
    if not ref:
        raise ValueError("wDER needs at least one word")
    wrong = sum(1 for a, b in zip(ref, hyp) if a != b)
    return WderReport(wrong / len(ref), len(ref), wrong)
