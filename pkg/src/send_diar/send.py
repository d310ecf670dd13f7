"""Speaker-embedding-aware neural diarization.

Speech frames and bank embeddings are encoded to a shared space, compared
pairwise into a T x N similarity matrix, and a post-net turns each frame's
similarities into either one distribution over valid speaker subsets (``pse``
head) or N independent activity probabilities (``multilabel`` head).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .corpus.simulate import enroll
from .nnet import Dense, Fcn, Fsmn, FsmnConfig, Module
from .pse import ValidLabelTable, build_valid_table, classes_to_labels
from .similarity import METRICS, similarity_graph

HEADS = ("pse", "multilabel")
POST_NETS = ("none", "fcn", "fsmn_fcn")
ROLES = ("positive", "negative", "zero")


@dataclass(frozen=True)
class SendConfig:
    feature_dim: int = 560
    embedding_dim: int = 512
    encoding_dim: int = 512
    capacity: int = 16
    max_overlap: int = 3
    metric: str = "sigma_dot"
    head: str = "pse"
    post_net: str = "fsmn_fcn"
    filter_size: int = 31
    speech_blocks: int = 8
    speech_hidden: int = 512
    speech_projection: int = 512
    speaker_layers: int = 3
    speaker_hidden: int = 512
    postnet_blocks: int = 2
    postnet_hidden: int = 0  # 0 means "capacity"
    postnet_fcn_hidden: int = 512

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.post_net not in POST_NETS:
            raise ValueError(f"post_net must be one of {POST_NETS}, got {self.post_net!r}")
        if self.head == "pse" and self.post_net == "none":
            raise ValueError("the pse head needs a post-net to produce class logits")
        if not 0 <= self.max_overlap <= self.capacity:
            raise ValueError("max_overlap must be within 0..capacity")
        if self.speaker_layers < 1:
            raise ValueError("speaker encoder needs at least one layer")

    @property
    def output_dim(self) -> int:
        return len(self.table()) if self.head == "pse" else self.capacity

    def table(self) -> ValidLabelTable:
        return build_valid_table(self.max_overlap, self.capacity)

    def speech_fsmn(self) -> FsmnConfig:
        return FsmnConfig(self.speech_blocks, self.speech_hidden, self.filter_size, self.speech_projection)

    def postnet_fsmn(self) -> FsmnConfig:
        width = self.postnet_hidden or self.capacity
        return FsmnConfig(self.postnet_blocks, width, self.filter_size, width)

    def replace(self, **changes) -> "SendConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SpeakerBank:
    embeddings: np.ndarray  # N x D_emb
    roles: tuple[str, ...]
    # positive_slots[i] is the slot holding the i-th positive speaker
    positive_slots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if len(self.roles) != len(self.embeddings):
            raise ValueError("one role per bank slot is required")
        if any(r not in ROLES for r in self.roles):
            raise ValueError(f"roles must be drawn from {ROLES}")
        zero = np.array([r == "zero" for r in self.roles], dtype=bool)
        if zero.any() and np.any(self.embeddings[zero] != 0):
            raise ValueError("zero slots must hold exact zero vectors")

    @property
    def capacity(self) -> int:
        return len(self.embeddings)


@dataclass
class DiarizationPosterior:
    head: str
    probs: np.ndarray             # T x C (pse) or T x N (multilabel)
    logits: Tensor | None = None  # kept when produced by a model, for training


class SpeakerEncoders(Module):
    """Speech encoder (FSMN + output projection) and bias-free speaker encoder.

    The speaker encoder has no biases, so zero-padded bank slots stay exactly
    zero after encoding.
    """

    def __init__(self, config: SendConfig, rng: np.random.Generator):
        self.speech_encoder = Fsmn(config.feature_dim, config.speech_fsmn(), rng)
        self.speech_output = Dense(config.speech_hidden, config.encoding_dim, rng)
        dims = [config.embedding_dim] + [config.speaker_hidden] * (config.speaker_layers - 1) + [config.encoding_dim]
        self.speaker_encoder = Fcn(dims, rng, bias=False)

    def encode_speech(self, x) -> Tensor:
        return self.speech_output(self.speech_encoder(ad.as_tensor(x)))

    def encode_speakers(self, v) -> Tensor:
        return self.speaker_encoder(ad.as_tensor(v))


def build_post_net(kind: str, in_dim: int, out_dim: int, config: SendConfig, rng) -> Module | None:
    if kind == "none":
        return None
    if kind == "fcn":
        return Fcn([in_dim, config.postnet_fcn_hidden, out_dim], rng)
    fsmn = Fsmn(in_dim, config.postnet_fsmn(), rng)
    return _FsmnFcn(fsmn, Fcn([config.postnet_fsmn().hidden_units, config.postnet_fcn_hidden, out_dim], rng))


class _FsmnFcn(Module):
    def __init__(self, fsmn: Fsmn, fcn: Fcn):
        self.fsmn = fsmn
        self.fcn = fcn

    def __call__(self, x: Tensor) -> Tensor:
        return self.fcn(self.fsmn(x))


class SendModel(Module):
    def __init__(self, config: SendConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.config = config
        self.encoders = SpeakerEncoders(config, rng)
        self.post_net = build_post_net(config.post_net, config.capacity, config.output_dim, config, rng)
        self.table = config.table() if config.head == "pse" else None
        self.assign_names()

    def similarity(self, x, embeddings) -> Tensor:
        H = self.encoders.encode_speech(x)
        E = self.encoders.encode_speakers(embeddings)
        return similarity_graph(H, E, self.config.metric)

    def logits(self, x, embeddings) -> Tensor:
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != cfg.feature_dim:
            raise ad.ShapeError(f"features must be T x {cfg.feature_dim}, got {x.shape}")
        if embeddings.shape != (cfg.capacity, cfg.embedding_dim):
            raise ad.ShapeError(
                f"bank must be {cfg.capacity} x {cfg.embedding_dim}, got {embeddings.shape}")
        A = self.similarity(x, embeddings)
        return A if self.post_net is None else self.post_net(A)


def send_forward(x, bank: SpeakerBank, model: SendModel) -> DiarizationPosterior:
    if bank.capacity != model.config.capacity:
        raise ValueError(f"bank has {bank.capacity} slots, model expects {model.config.capacity}")
    logits = model.logits(x, bank.embeddings)
    if model.config.head == "pse":
        return DiarizationPosterior("pse", ad.softmax(logits.data, axis=-1), logits)
    return DiarizationPosterior("multilabel", expit(logits.data), logits)


def send_loss(post: DiarizationPosterior, targets) -> Tensor:
    """Mean frame cross-entropy (pse, class targets) or mean binary cross-entropy
    (multilabel, T x N activity targets)."""
    t = np.asarray(targets)
    if len(t) != len(post.probs):
        raise ValueError(f"{len(t)} targets for {len(post.probs)} frames")
    if post.head == "pse":
        if t.ndim != 1:
            raise ValueError("pse head expects a sequence of class indices")
        if post.logits is not None:
            return ad.softmax_cross_entropy(post.logits, t)
        with np.errstate(divide="ignore"):
            return ad.Tensor(-np.mean(np.log(post.probs[np.arange(len(t)), t])), _check=False)
    if t.shape != post.probs.shape:
        raise ValueError(f"multilabel targets {t.shape} vs posterior {post.probs.shape}")
    if post.logits is not None:
        return ad.sigmoid_binary_cross_entropy(post.logits, t)
    p = np.clip(post.probs, 1e-300, 1.0)
    q = np.clip(1.0 - post.probs, 1e-300, 1.0)
    return ad.Tensor(-np.mean(t * np.log(p) + (1 - t) * np.log(q)))


def decode_frames(post: DiarizationPosterior, table: ValidLabelTable | None = None,
                  threshold: float | None = None) -> np.ndarray:
    """Hard T x N activity. pse: per-frame argmax (ties to the lower class).
    multilabel: probability >= threshold."""
    if post.head == "pse":
        if table is None:
            raise ValueError("pse decoding needs the valid label table")
        return classes_to_labels(np.argmax(post.probs, axis=1), table)
    if threshold is None:
        raise ValueError("multilabel decoding needs a threshold")
    return (post.probs >= threshold).astype(np.int64)


def augment_bank(positives, negative_pool, n: int, rng: np.random.Generator) -> SpeakerBank:
    """Fill ``n`` slots: all positives, m ~ U{0..n-#pos} negatives drawn without
    replacement (capped by the pool size), the rest zeros; slot order shuffled."""
    positives = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    if positives.size == 0:
        raise ValueError("augment_bank needs at least one positive embedding")
    n_pos, dim = positives.shape
    if n_pos > n:
        raise ValueError(f"{n_pos} positives exceed bank capacity {n}")
    pool = np.asarray(negative_pool, dtype=np.float64).reshape(-1, dim)
    m = min(int(rng.integers(0, n - n_pos + 1)), len(pool))
    negatives = pool[rng.choice(len(pool), size=m, replace=False)] if m else np.zeros((0, dim))
    rows = np.concatenate([positives, negatives, np.zeros((n - n_pos - m, dim))])
    roles = ["positive"] * n_pos + ["negative"] * m + ["zero"] * (n - n_pos - m)
    order = rng.permutation(n)  # order[slot] = source row
    slot_of = np.empty(n, dtype=np.int64)
    slot_of[order] = np.arange(n)
    return SpeakerBank(rows[order], tuple(roles[i] for i in order), slot_of[:n_pos])


def cluster_centers(embeddings, assignments) -> np.ndarray:
    """Mean embedding per cluster id, in order of first appearance."""
    emb = np.asarray(embeddings, dtype=np.float64)
    ids = list(assignments)
    if len(emb) == 0:
        raise ValueError("cluster_centers needs at least one embedding")
    if len(ids) != len(emb):
        raise ValueError(f"{len(emb)} embeddings but {len(ids)} assignments")
    order = list(dict.fromkeys(ids))
    ids = np.asarray([order.index(i) for i in ids])
    return np.stack([emb[ids == k].mean(axis=0) for k in range(len(order))])


# ----------------------------------------------------------------------------
# dataset plumbing


@dataclass
class Example:
    features: np.ndarray
    bank: SpeakerBank
    labels: np.ndarray  # T x N in bank slot order
    sample_index: int = -1


def negative_embeddings(dataset, sample, rng, noise: float) -> np.ndarray:
    others = np.setdiff1d(dataset.speaker_pool, sample.speaker_ids)
    return enroll(dataset.world.means[others], noise, rng) if len(others) else np.zeros((0, dataset.world.means.shape[1]))


def make_example(dataset, index: int, capacity: int, rng: np.random.Generator,
                 fresh_enrollment: bool = True) -> Example:
    """Bank + bank-ordered labels for one sample. ``fresh_enrollment`` redraws
    the positives' enrollment noise (training); otherwise the stored ones are used."""
    sample = dataset.samples[index]
    noise = dataset.config.enrollment_noise
    positives = enroll(dataset.world.means[sample.speaker_ids], noise, rng) if fresh_enrollment else sample.enrollments
    bank = augment_bank(positives, negative_embeddings(dataset, sample, rng, noise), capacity, rng)
    labels = np.zeros((sample.num_frames, capacity), dtype=np.int64)
    labels[:, bank.positive_slots] = sample.labels
    return Example(sample.features, bank, labels, index)
