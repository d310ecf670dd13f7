"""Synthetic multi-talker mixtures with exact frame labels.

A mixture is a timeline of speaker turns. Each turn starts at the previous
turn's end plus a gap; a negative gap overlaps the two turns. Overlaps are
capped at half the shortest utterance, so at most two turns ever overlap.

Acoustic frames are not audio: a frame is the sum of the active speakers'
signature vectors (their mean embedding pushed through a fixed random
projection), plus the signatures of the words being spoken, plus noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

SEPARATOR = "<sc>"
RESERVED_TOKENS = (SEPARATOR,)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    num_speakers_range: tuple[int, int] = (2, 4)
    max_simultaneous: int = 2
    turns_range: tuple[int, int] = (4, 8)
    utterance_length_range: tuple[int, int] = (20, 60)
    pause_mean: float = 4.0
    overlap_ratio: float = 0.1
    edge_silence_range: tuple[int, int] = (2, 8)
    feature_dim: int = 16
    embedding_dim: int = 16
    separation: float = 1.0
    feature_noise: float = 0.1
    enrollment_noise: float = 0.1
    word_length: int = 4
    vocab_size: int = 16
    word_scale: float = 0.0

    def __post_init__(self):
        lo, hi = self.num_speakers_range
        if not 1 <= lo <= hi:
            raise ValueError(f"num_speakers_range {self.num_speakers_range} is empty or non-positive")
        if not 1 <= self.turns_range[0] <= self.turns_range[1]:
            raise ValueError(f"turns_range {self.turns_range} is empty")
        a, b = self.utterance_length_range
        if not 2 <= a <= b:
            raise ValueError(f"utterance_length_range {self.utterance_length_range} must satisfy 2 <= min <= max")
        if not 1 <= self.edge_silence_range[0] <= self.edge_silence_range[1]:
            raise ValueError("edge_silence_range must be >= 1 so every mixture has silence")
        if self.max_simultaneous < 1:
            raise ValueError("max_simultaneous must be >= 1")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ValueError("overlap_ratio must be in [0, 1)")
        if self.overlap_ratio > 0 and (self.max_simultaneous < 2 or hi < 2):
            raise ValueError("overlap requested but at most one speaker may talk at a time")
        if self.pause_mean < 0 or self.feature_noise < 0 or self.enrollment_noise < 0:
            raise ValueError("pause_mean and noise scales must be non-negative")
        if self.word_length < 1 or self.vocab_size < 1:
            raise ValueError("word_length and vocab_size must be positive")
        self.overlap_probability  # raises when the target is unreachable

    @property
    def max_overlap_frames(self) -> int:
        return self.utterance_length_range[0] // 2

    @property
    def overlap_probability(self) -> float:
        """Per-gap probability of overlapping, solved so the pooled overlap ratio
        ``E[overlapped frames] / E[speech frames]`` hits ``overlap_ratio``."""
        r = self.overlap_ratio
        if r == 0:
            return 0.0
        mean_len = sum(self.utterance_length_range) / 2
        mean_overlap = (1 + self.max_overlap_frames) / 2
        turns, gaps = expected_turns_and_gaps(self.num_speakers_range, self.turns_range)
        q = r * mean_len * turns / (mean_overlap * gaps * (1 + r))
        if q > 1:
            raise ValueError(f"overlap_ratio {r} is unreachable with these turn lengths (needs p={q:.3f})")
        return q


def expected_turns_and_gaps(num_speakers_range, turns_range) -> tuple[float, float]:
    """E[#turns] and E[#gaps between different speakers] under uniform draws."""
    speakers = range(num_speakers_range[0], num_speakers_range[1] + 1)
    turns = range(turns_range[0], turns_range[1] + 1)
    n = len(speakers) * len(turns)
    total_turns = total_gaps = 0.0
    for s, m in product(speakers, turns):
        m = max(m, s)
        total_turns += m
        total_gaps += (m - 1) if s >= 2 else 0
    return total_turns / n, total_gaps / n


@dataclass
class SpeakerWorld:
    """Everything shared across mixtures: speaker means and the acoustic mapping."""

    means: np.ndarray            # S x D_emb unit vectors
    projection: np.ndarray       # F x D_emb
    word_signatures: np.ndarray  # vocab x F

    def signature(self, speaker: int) -> np.ndarray:
        return self.projection @ self.means[speaker]


@dataclass
class MixtureSample:
    features: np.ndarray        # T x F
    labels: np.ndarray          # T x n_speakers, column i belongs to speaker_ids[i]
    speaker_ids: np.ndarray     # indices into SpeakerWorld.means
    enrollments: np.ndarray     # n_speakers x D_emb
    words: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    word_spans: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    word_speakers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_frames(self) -> int:
        return len(self.features)

    def overlap_stats(self) -> tuple[int, int]:
        """(overlapped frames, speech frames)."""
        active = self.labels.sum(axis=1)
        return int((active >= 2).sum()), int((active >= 1).sum())


def synth_speaker_bank(num_speakers: int, dim: int, separation, rng: np.random.Generator,
                       max_tries: int = 10_000) -> np.ndarray:
    """Unit-norm speaker means.

    ``separation="orthogonal"`` gives an orthonormal set (needs dim >= count).
    A positive float ``s`` rejection-samples random directions so that every
    pairwise cosine is at most ``1 / (1 + s)``.
    """
    if separation == "orthogonal":
        if dim < num_speakers:
            raise ValueError(f"cannot place {num_speakers} orthogonal speakers in {dim} dimensions")
        q, _ = np.linalg.qr(rng.standard_normal((dim, num_speakers)))
        return q.T.copy()
    separation = float(separation)
    if separation <= 0:
        raise ValueError("separation must be positive")
    bound = 1.0 / (1.0 + separation)
    means = np.zeros((num_speakers, dim))
    for i in range(num_speakers):
        for _ in range(max_tries):
            v = rng.standard_normal(dim)
            v /= np.linalg.norm(v)
            if i == 0 or (means[:i] @ v).max() <= bound:
                means[i] = v
                break
        else:
            raise ValueError(f"could not place speaker {i} with pairwise cosine <= {bound:.3f}")
    return means


def enroll(means, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Noisy, renormalized copies of ``means`` (one enrollment per row)."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if noise == 0:
        return means.copy()
    v = means + noise * rng.standard_normal(means.shape)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_world(config: SimConfig, num_speakers: int, rng: np.random.Generator) -> SpeakerWorld:
    means = synth_speaker_bank(num_speakers, config.embedding_dim, config.separation, rng)
    # scaled so a signature has roughly unit norm
    projection = rng.standard_normal((config.feature_dim, config.embedding_dim)) / np.sqrt(config.feature_dim)
    words = rng.standard_normal((config.vocab_size, config.feature_dim))
    words /= np.linalg.norm(words, axis=1, keepdims=True)
    return SpeakerWorld(means, projection, words)


def _turn_speakers(num_speakers: int, num_turns: int, rng: np.random.Generator) -> list[int]:
    order = list(rng.permutation(num_speakers))
    while len(order) < num_turns:
        if num_speakers == 1:
            order.append(0)
        else:
            nxt = int(rng.integers(num_speakers - 1))
            order.append(nxt if nxt < order[-1] else nxt + 1)
    return [int(s) for s in order]


def simulate_mixture(config: SimConfig, world: SpeakerWorld, rng: np.random.Generator,
                     speaker_pool=None) -> MixtureSample:
    """Draw one mixture from the speakers in ``speaker_pool`` (default: all of ``world``)."""
    pool = np.arange(len(world.means)) if speaker_pool is None else np.asarray(speaker_pool)
    n_spk = int(rng.integers(config.num_speakers_range[0], config.num_speakers_range[1] + 1))
    if n_spk > len(pool):
        raise ValueError(f"need {n_spk} speakers but the pool has {len(pool)}")
    speaker_ids = np.sort(rng.choice(pool, size=n_spk, replace=False))
    num_turns = max(int(rng.integers(config.turns_range[0], config.turns_range[1] + 1)), n_spk)
    who = _turn_speakers(n_spk, num_turns, rng)

    lo, hi = config.utterance_length_range
    lengths = rng.integers(lo, hi + 1, size=num_turns)
    q = config.overlap_probability if n_spk >= 2 else 0.0
    lead = int(rng.integers(config.edge_silence_range[0], config.edge_silence_range[1] + 1))
    starts = [lead]
    for i in range(1, num_turns):
        prev_end = starts[-1] + int(lengths[i - 1])
        if rng.random() < q:
            gap = -int(rng.integers(1, config.max_overlap_frames + 1))
        else:
            gap = int(np.floor(rng.exponential(config.pause_mean))) if config.pause_mean > 0 else 0
        starts.append(prev_end + gap)
    starts = np.asarray(starts)
    ends = starts + lengths
    trail = int(rng.integers(config.edge_silence_range[0], config.edge_silence_range[1] + 1))
    num_frames = int(ends.max()) + trail

    labels = np.zeros((num_frames, n_spk), dtype=np.int64)
    for s, a, b in zip(who, starts, ends):
        labels[a:b, s] = 1
    if labels.sum(axis=1).max() > config.max_simultaneous:
        raise AssertionError("simulator produced more simultaneous speakers than allowed")

    features = labels @ np.stack([world.signature(i) for i in speaker_ids])

    words, spans, word_speakers = [], [], []
    for s, a, b in zip(who, starts, ends):
        for w0 in range(int(a), int(b), config.word_length):
            words.append(int(rng.integers(config.vocab_size)))
            spans.append((w0, min(w0 + config.word_length, int(b))))
            word_speakers.append(s)
    words = np.asarray(words, dtype=np.int64)
    spans = np.asarray(spans, dtype=np.int64).reshape(-1, 2)
    if config.word_scale > 0:
        for w, (a, b) in zip(words, spans):
            features[a:b] += config.word_scale * world.word_signatures[w]
    features = features + config.feature_noise * rng.standard_normal(features.shape)

    return MixtureSample(
        features=features,
        labels=labels,
        speaker_ids=speaker_ids,
        enrollments=enroll(world.means[speaker_ids], config.enrollment_noise, rng),
        words=words,
        word_spans=spans,
        word_speakers=np.asarray(word_speakers, dtype=np.int64),
    )
