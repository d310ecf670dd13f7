"""RTTM reading/writing and conversion to frame-level speaker activity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class RttmError(ValueError):
    pass


@dataclass(frozen=True)
class RttmSegment:
    recording_id: str
    onset: float
    duration: float
    speaker_id: str

    def __post_init__(self):
        if self.onset < 0:
            raise RttmError(f"negative onset {self.onset}")
        if not self.duration > 0:
            raise RttmError(f"non-positive duration {self.duration}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


def rttm_parse(text: str) -> list[RttmSegment]:
    """Parse SPEAKER lines (10 whitespace-separated fields). Blank lines are skipped."""
    segments = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 10 or fields[0] != "SPEAKER":
            raise RttmError(f"line {lineno}: expected 10 fields starting with SPEAKER: {line!r}")
        try:
            onset, duration = float(fields[3]), float(fields[4])
            segments.append(RttmSegment(fields[1], onset, duration, fields[7]))
        except (ValueError, RttmError) as exc:
            raise RttmError(f"line {lineno}: {exc}") from None
    return segments


def rttm_emit(segments: Iterable[RttmSegment]) -> str:
    return "".join(
        f"SPEAKER {s.recording_id} 1 {s.onset:.3f} {s.duration:.3f} <NA> <NA> {s.speaker_id} <NA> <NA>\n"
        for s in segments
    )


def rttm_to_frame_labels(segments: Sequence[RttmSegment], frame_shift: float,
                         speaker_order: Sequence[str], num_frames: int | None = None) -> np.ndarray:
    """Frame t is active for a speaker iff its centre ``(t + 0.5) * frame_shift``
    lies in ``[onset, onset + duration)`` of one of that speaker's segments."""
    if frame_shift <= 0:
        raise ValueError("frame_shift must be positive")
    recordings = {s.recording_id for s in segments}
    if len(recordings) > 1:
        raise RttmError(f"segments span several recordings: {sorted(recordings)}")
    column = {spk: i for i, spk in enumerate(speaker_order)}
    if num_frames is None:
        end = max((s.end for s in segments), default=0.0)
        num_frames = int(np.ceil(end / frame_shift - 1e-9))
    labels = np.zeros((num_frames, len(speaker_order)), dtype=np.int64)
    centres = (np.arange(num_frames) + 0.5) * frame_shift
    for s in segments:
        if s.speaker_id not in column:
            raise RttmError(f"speaker {s.speaker_id!r} not in speaker order")
        labels[(centres >= s.onset) & (centres < s.end), column[s.speaker_id]] = 1
    return labels


def frame_labels_to_rttm(labels, frame_shift: float, recording_id: str,
                         speaker_names: Sequence[str]) -> list[RttmSegment]:
    """One segment per maximal run of active frames, ordered by onset then speaker."""
    y = np.asarray(labels)
    segments = []
    for col, name in enumerate(speaker_names):
        padded = np.concatenate([[0], y[:, col].astype(np.int64), [0]])
        edges = np.diff(padded)
        for start, stop in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
            segments.append(RttmSegment(recording_id, round(start * frame_shift, 6),
                                        round((stop - start) * frame_shift, 6), name))
    segments.sort(key=lambda s: (s.onset, s.speaker_id))
    return segments
