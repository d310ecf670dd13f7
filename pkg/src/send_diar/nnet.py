"""Neural building blocks: dense stacks, FSMN, self-attention, cross-attention.

All blocks operate on a single sequence laid out as rows (T x features).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


class Module:
    """Parameter container; walks attributes to find Parameters and sub-modules."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Dense(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(glorot(rng, in_dim, out_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None
        self.in_dim, self.out_dim = in_dim, out_dim

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ad.ShapeError(f"Dense({self.in_dim}->{self.out_dim}): got input {x.shape}")
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class Fcn(Module):
    """Affine layers with tanh in between; the last layer stays affine."""

    def __init__(self, dims: list[int], rng: np.random.Generator, bias: bool = True):
        if len(dims) < 2:
            raise ValueError("Fcn needs at least input and output dims")
        self.layers = [Dense(a, b, rng, bias) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            if i:
                x = ad.tanh(x)
            x = layer(x)
        return x


@dataclass(frozen=True)
class FsmnConfig:
    num_blocks: int = 8
    hidden_units: int = 512
    filter_size: int = 31
    projection_dim: int = 512

    def __post_init__(self):
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise ValueError(f"filter_size must be odd and >= 1, got {self.filter_size}")
        if min(self.num_blocks, self.hidden_units, self.projection_dim) < 1:
            raise ValueError("FSMN dimensions must be positive")


class FsmnBlock(Module):
    """Project to the memory space, filter over time, expand, add residual, tanh.

    The memory filter is centred: ``filter_size // 2`` past taps, the current
    frame, and as many future taps, zero-padded at the sequence ends.
    """

    def __init__(self, hidden: int, projection: int, filter_size: int, rng: np.random.Generator):
        self.project = Dense(hidden, projection, rng)
        taps = rng.uniform(-0.1, 0.1, size=(filter_size, projection)) / np.sqrt(filter_size)
        taps[filter_size // 2] += 1.0
        self.taps = Parameter(taps)
        self.expand = Dense(projection, hidden, rng)

    def __call__(self, h: Tensor) -> Tensor:
        memory = ad.fir_filter(self.project(h), self.taps)
        return ad.tanh(h + self.expand(memory))


class Fsmn(Module):
    def __init__(self, input_dim: int, config: FsmnConfig, rng: np.random.Generator):
        self.config = config
        self.input = Dense(input_dim, config.hidden_units, rng)
        self.blocks = [
            FsmnBlock(config.hidden_units, config.projection_dim, config.filter_size, rng)
            for _ in range(config.num_blocks)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[0] < 1:
            raise ad.ShapeError(f"Fsmn expects a non-empty T x F sequence, got {x.shape}")
        h = ad.tanh(self.input(x))
        for block in self.blocks:
            h = block(h)
        return h


@dataclass(frozen=True)
class AttentionConfig:
    model_dim: int = 512
    num_heads: int = 8
    num_blocks: int = 6
    ffn_dim: int = 2048

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by {self.num_heads} heads")


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.query = Dense(dim, dim, rng)
        self.key = Dense(dim, dim, rng)
        self.value = Dense(dim, dim, rng)
        self.out = Dense(dim, dim, rng)
        self.heads = heads
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        length, dim = x.shape
        return ad.transpose(ad.reshape(x, (length, self.heads, dim // self.heads)), (1, 0, 2))

    def __call__(self, x: Tensor) -> Tensor:
        length, dim = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = (q @ ad.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(dim // self.heads))
        weights = ad.softmax(scores, axis=-1)
        self.last_weights = weights.data
        context = ad.reshape(ad.transpose(weights @ v, (1, 0, 2)), (length, dim))
        return self.out(context)


class TransformerBlock(Module):
    """Post-norm encoder block: attention and feed-forward, each with residual + layer norm."""

    def __init__(self, config: AttentionConfig, rng: np.random.Generator):
        d = config.model_dim
        self.attention = MultiHeadSelfAttention(d, config.num_heads, rng)
        self.norm1_gain, self.norm1_bias = Parameter(np.ones(d)), Parameter(np.zeros(d))
        self.ffn = Fcn([d, config.ffn_dim, d], rng)
        self.norm2_gain, self.norm2_bias = Parameter(np.ones(d)), Parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.layer_norm(x + self.attention(x), self.norm1_gain, self.norm1_bias)
        return ad.layer_norm(x + self.ffn(x), self.norm2_gain, self.norm2_bias)


class SelfAttentionEncoder(Module):
    def __init__(self, config: AttentionConfig, rng: np.random.Generator, positional: bool = True):
        self.config = config
        self.positional = positional
        self.blocks = [TransformerBlock(config, rng) for _ in range(config.num_blocks)]

    def __call__(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] != self.config.model_dim:
            raise ad.ShapeError(
                f"SelfAttentionEncoder expects L x {self.config.model_dim} input, got {z.shape}")
        if self.positional:
            z = z + sinusoidal_positions(*z.shape)
        for block in self.blocks:
            z = block(z)
        return z


class AttentionAligner(Module):
    """Single-head cross attention of word encodings over speech encodings.

    ``logit[l, t] = (W_q u_l) . (W_k h_t)``, softmax over t, and the output
    row is the weighted sum of ``W_v h_t``. No scaling, no biases.
    Because the logits are unscaled, ``W_q`` starts ``1/sqrt(dim)`` smaller
    than the other projections; otherwise the initial logits have standard
    deviation near ``sqrt(dim)`` and a saturated softmax can stall training.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        self.w_q = Parameter(glorot(rng, dim, dim) / np.sqrt(dim))
        self.w_k = Parameter(glorot(rng, dim, dim))
        self.w_v = Parameter(glorot(rng, dim, dim))
        self.last_weights: np.ndarray | None = None

    def __call__(self, U: Tensor, H: Tensor) -> Tensor:
        if H.ndim != 2 or H.shape[0] == 0:
            raise ad.ShapeError("AttentionAligner: no speech frames to attend over")
        if U.ndim != 2 or U.shape[1] != self.w_q.shape[0] or H.shape[1] != self.w_k.shape[0]:
            raise ad.ShapeError(f"AttentionAligner: U {U.shape}, H {H.shape} vs dim {self.w_q.shape[0]}")
        logits = (U @ self.w_q) @ (H @ self.w_k).T
        weights = ad.softmax(logits, axis=-1)
        self.last_weights = weights.data
        return weights @ (H @ self.w_v)
