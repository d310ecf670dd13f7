"""Word-level speaker attribution from speech, speaker bank and transcript.

Word embeddings pass through a self-attention text encoder; each word then
attends over the speech encodings (single-head, unscaled) to collect the
acoustics it was spoken with. The aggregated vector is compared with every
speaker encoding by sigma-dot, and the post-net maps the L x N similarity
sequence to N + 1 classes per word: one per bank slot plus "none". Words
are never overlapped, so there is no power-set encoding here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .corpus.simulate import SEPARATOR
from .nnet import AttentionAligner, AttentionConfig, Module, SelfAttentionEncoder
from .scoring import WderReport, wder
from .seeding import derive_rng
from .send import SendConfig, SpeakerBank, SpeakerEncoders, build_post_net, make_example
from .similarity import similarity_graph
from .training import TrainConfig, TrainingReport, fit

SEPARATOR_ID = 0


@dataclass(frozen=True)
class SendTiConfig(SendConfig):
    vocab_size: int = 1000  # including the separator at id 0
    text_blocks: int = 6
    text_heads: int = 8
    text_ffn: int = 2048
    positional: bool = True

    @property
    def output_dim(self) -> int:
        return self.capacity + 1

    @property
    def none_class(self) -> int:
        return self.capacity

    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.encoding_dim, self.text_heads, self.text_blocks, self.text_ffn)


class Vocabulary:
    """Closed word list with the speaker-change separator reserved at id 0."""

    def __init__(self, words: Sequence[str]):
        if SEPARATOR in words:
            raise ValueError(f"{SEPARATOR} is reserved")
        self.words = [SEPARATOR, *words]
        self.index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        return cls([f"w{i}" for i in range(size)])

    def __len__(self):
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.index[t] for t in tokens]
        except KeyError as exc:
            raise KeyError(f"token {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.words[i] for i in ids]


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple
    sc_positions: frozenset = frozenset()

    def __len__(self):
        return len(self.tokens)

    def word_positions(self) -> list[int]:
        return [i for i in range(len(self.tokens)) if i not in self.sc_positions]


def insert_sc_separators(words: Sequence, speaker_per_word: Sequence, separator=SEPARATOR_ID) -> TokenSequence:
    """Insert ``separator`` wherever the speaker differs from the previous word's."""
    if len(words) != len(speaker_per_word):
        raise ValueError(f"{len(words)} words but {len(speaker_per_word)} speaker labels")
    tokens, positions = [], []
    for i, (w, s) in enumerate(zip(words, speaker_per_word)):
        if i and s != speaker_per_word[i - 1]:
            positions.append(len(tokens))
            tokens.append(separator)
        tokens.append(w)
    return TokenSequence(tuple(tokens), frozenset(positions))


def read_transcripts(path, vocab: Vocabulary) -> list[TokenSequence]:
    """One utterance per line, whitespace tokens, separators written literally."""
    out = []
    for line in Path(path).read_text().splitlines():
        words = line.split()
        ids = vocab.encode(words)
        out.append(TokenSequence(tuple(ids), frozenset(i for i, w in enumerate(words) if w == SEPARATOR)))
    return out


def write_transcripts(path, sequences: Sequence[TokenSequence], vocab: Vocabulary) -> None:
    Path(path).write_text("".join(" ".join(vocab.decode(s.tokens)) + "\n" for s in sequences))


@dataclass
class WordPosterior:
    probs: np.ndarray  # L x (N + 1)
    sc_positions: frozenset = frozenset()
    logits: Tensor | None = None


class SendTiModel(Module):
    def __init__(self, config: SendTiConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.config = config
        self.encoders = SpeakerEncoders(config, rng)
        self.token_embedding = Parameter(rng.standard_normal((config.vocab_size, config.encoding_dim)))
        self.text_encoder = SelfAttentionEncoder(config.attention(), rng, positional=config.positional)
        self.aligner = AttentionAligner(config.encoding_dim, rng)
        self.post_net = build_post_net(config.post_net, config.capacity, config.output_dim, config, rng)
        self.assign_names()

    def logits(self, x, embeddings, tokens: Sequence[int], mask_speech: bool = False) -> Tensor:
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != cfg.feature_dim:
            raise ad.ShapeError(f"features must be non-empty T x {cfg.feature_dim}, got {x.shape}")
        if len(tokens) == 0:
            raise ValueError("SEND-Ti needs at least one token")
        H = self.encoders.encode_speech(x)
        if mask_speech:
            H = H * 0.0
        E = self.encoders.encode_speakers(np.asarray(embeddings, dtype=np.float64))
        U = self.text_encoder(ad.embedding(self.token_embedding, tokens))
        M = self.aligner(U, H)
        A = similarity_graph(M, E, "sigma_dot")
        return A if self.post_net is None else self.post_net(A)


def sendti_forward(x, bank: SpeakerBank, tokens: TokenSequence, model: SendTiModel,
                   mask_speech: bool = False) -> WordPosterior:
    if bank.capacity != model.config.capacity:
        raise ValueError(f"bank has {bank.capacity} slots, model expects {model.config.capacity}")
    logits = model.logits(x, bank.embeddings, tokens.tokens, mask_speech)
    return WordPosterior(ad.softmax(logits.data, axis=-1), tokens.sc_positions, logits)


def sendti_loss(post: WordPosterior, targets, separator_weight: float = 0.0) -> Tensor:
    """Mean cross-entropy over tokens. Separator rows (target "none") are
    weighted by ``separator_weight``; at 0 they only act as context."""
    weights = np.ones(len(targets))
    weights[list(post.sc_positions)] = separator_weight
    return ad.softmax_cross_entropy(post.logits, targets, weights)


def decode_words(post: WordPosterior) -> list[int]:
    """Per-word argmax (ties to the lower index), separator positions dropped."""
    best = np.argmax(post.probs, axis=1)
    return [int(best[i]) for i in range(len(best)) if i not in post.sc_positions]


def warm_start(model: SendTiModel, checkpoint) -> list[str]:
    """Copy encoder weights from a SEND checkpoint; returns the names loaded."""
    stored = ad.load_arrays(checkpoint)
    loaded = []
    for name, p in model.named_parameters():
        if name.startswith("encoders.") and name in stored and stored[name].shape == p.shape:
            p.data = stored[name].copy()
            loaded.append(name)
    return loaded


# ----------------------------------------------------------------------------
# examples and training


@dataclass
class TiExample:
    features: np.ndarray
    bank: SpeakerBank
    tokens: TokenSequence
    targets: np.ndarray       # one class per token, separators -> none
    word_targets: list[int]   # separators removed


def substitute_words(words: np.ndarray, rate: float, vocab_size: int, rng: np.random.Generator) -> np.ndarray:
    """Replace each word by a different random word with probability ``rate``."""
    words = np.asarray(words).copy()
    if rate <= 0 or vocab_size < 2:
        return words
    hit = rng.random(len(words)) < rate
    shift = rng.integers(1, vocab_size, size=len(words))
    words[hit] = (words[hit] + shift[hit]) % vocab_size
    return words


def make_ti_example(dataset, index: int, capacity: int, rng: np.random.Generator, *, sc: bool,
                    substitution: float = 0.0, fresh_enrollment: bool = True) -> TiExample:
    base = make_example(dataset, index, capacity, rng, fresh_enrollment)
    sample = dataset.samples[index]
    slots = base.bank.positive_slots[sample.word_speakers]
    words = substitute_words(sample.words, substitution, dataset.config.vocab_size, rng) + 1
    if sc:
        tokens = insert_sc_separators(list(words), list(slots))
    else:
        tokens = TokenSequence(tuple(int(w) for w in words))
    targets = np.full(len(tokens), capacity, dtype=np.int64)
    targets[tokens.word_positions()] = slots
    return TiExample(base.features, base.bank, tokens, targets, [int(s) for s in slots])


def ti_examples(dataset, capacity: int, seed: int, *, sc: bool, substitution: float = 0.0,
                label: str = "validation") -> list[TiExample]:
    return [make_ti_example(dataset, i, capacity, derive_rng(seed, label, "ti-bank", i), sc=sc,
                            substitution=substitution, fresh_enrollment=False)
            for i in range(len(dataset))]


def evaluate_words(model: SendTiModel, examples: Sequence[TiExample], mask_speech: bool = False) -> WderReport:
    ref, hyp = [], []
    for ex in examples:
        ref += ex.word_targets
        hyp += decode_words(sendti_forward(ex.features, ex.bank, ex.tokens, model, mask_speech))
    return wder(ref, hyp)


def train_sendti(model: SendTiModel, train_set, val_set, config: TrainConfig, *, sc: bool,
                 train_substitution: float = 0.0, val_substitution: float = 0.0) -> TrainingReport:
    """Records carry validation wDER in the ``der`` column."""
    capacity = model.config.capacity
    val = ti_examples(val_set, capacity, config.seed, sc=sc, substitution=val_substitution)

    def epoch_examples(epoch):
        order = derive_rng(config.seed, "ti-shuffle", epoch).permutation(len(train_set))
        return [make_ti_example(train_set, int(i), capacity, derive_rng(config.seed, "ti-train", epoch, int(i)),
                                sc=sc, substitution=train_substitution)
                for i in order]

    def loss_fn(ex):
        return sendti_loss(sendti_forward(ex.features, ex.bank, ex.tokens, model), ex.targets)

    records = fit(model.parameters(), epoch_examples, loss_fn, lambda: evaluate_words(model, val).wder, config)
    return TrainingReport(config.seed, records)
