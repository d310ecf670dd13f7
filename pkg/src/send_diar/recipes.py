"""Desk-scale experiment setups and the ablation comparisons built on them.

A setup fixes the simulated corpus (one seed) and the model family; every
ablation row trains several models that differ only in the compared setting
and in the per-repeat training seed, then reports the mean validation score.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, SimConfig, apply_frontend, make_world, simulate_dataset, split_speakers
from .optim import OptimizerConfig
from .seeding import derive_rng, derive_seed
from .send import SendConfig, SendModel
from .sendti import SendTiConfig, SendTiModel, evaluate_words, ti_examples, train_sendti
from .training import TrainConfig, best_threshold, evaluate, train, validation_examples

RECIPES = ("metrics", "postnet_pse", "sendti_sc")


@dataclass
class CorpusSetup:
    train_samples: int = 300
    validation_samples: int = 40
    train_speakers: int = 50
    validation_speakers: int = 10
    context: int = 3
    stride: int = 1
    repeats: int = 5


@dataclass
class DeskSetup:
    sim: SimConfig
    corpus: CorpusSetup
    model: SendConfig
    train: TrainConfig


def desk_send_setup(seed: int = 1) -> DeskSetup:
    """2-4 speakers, overlap present, N=4 slots, K=2, reduced widths.

    40 epochs lets validation DER settle. At 15 the per-epoch DER still moves
    by a couple of points, which is as large as the head and post-net
    differences the ablation is meant to show.
    """
    sim = SimConfig(seed=seed, num_speakers_range=(2, 4), turns_range=(4, 8), utterance_length_range=(16, 40),
                    overlap_ratio=0.15, pause_mean=3.0, feature_noise=0.05)
    model = SendConfig(feature_dim=0, embedding_dim=sim.embedding_dim, encoding_dim=32, capacity=4, max_overlap=2,
                       filter_size=11, speech_blocks=2, speech_hidden=64, speech_projection=32,
                       speaker_layers=3, speaker_hidden=64, postnet_hidden=32, postnet_fcn_hidden=32)
    train_cfg = TrainConfig(epochs=40, batch_size=8, optimizer=OptimizerConfig(peak_lr=3e-3, warmup_steps=100))
    return DeskSetup(sim, CorpusSetup(), model, train_cfg)


def desk_sendti_setup(seed: int = 1) -> DeskSetup:
    """Word-bearing mixtures for the text-aware model (no frame stacking).

    Turns are short (2-5 words) so that a good share of words sit next to a
    speaker change, which is where separators carry information.
    """
    sim = SimConfig(seed=seed, num_speakers_range=(2, 3), turns_range=(6, 10), utterance_length_range=(8, 20),
                    overlap_ratio=0.1, pause_mean=3.0, feature_noise=0.3, word_scale=1.0, vocab_size=32,
                    word_length=4)
    model = SendTiConfig(feature_dim=0, embedding_dim=sim.embedding_dim, encoding_dim=32, capacity=4, max_overlap=2,
                         filter_size=5, speech_blocks=2, speech_hidden=64, speech_projection=32, speaker_hidden=64,
                         postnet_hidden=32, postnet_fcn_hidden=32, vocab_size=sim.vocab_size + 1,
                         text_blocks=1, text_heads=2, text_ffn=64)
    corpus = CorpusSetup(train_samples=400, train_speakers=30, context=0)
    train_cfg = TrainConfig(epochs=20, batch_size=8, optimizer=OptimizerConfig(peak_lr=3e-3, warmup_steps=100))
    return DeskSetup(sim, corpus, model, train_cfg)


def resolved_model(setup: DeskSetup):
    """The model config with input widths taken from the corpus settings."""
    c = setup.corpus
    return setup.model.replace(feature_dim=setup.sim.feature_dim * (2 * c.context + 1),
                               embedding_dim=setup.sim.embedding_dim)


def desk_datasets(setup: DeskSetup) -> tuple[Dataset, Dataset]:
    c = setup.corpus
    world = make_world(setup.sim, c.train_speakers + c.validation_speakers)
    train_pool, val_pool = split_speakers(c.train_speakers, c.validation_speakers)
    train_set = simulate_dataset(setup.sim, c.train_samples, world, train_pool, "train")
    val_set = simulate_dataset(setup.sim, c.validation_samples, world, val_pool, "validation")
    if c.context or c.stride != 1:
        train_set = apply_frontend(train_set, c.context, c.stride)
        val_set = apply_frontend(val_set, c.context, c.stride)
    return train_set, val_set


def repeat_seeds(setup: DeskSetup) -> list[int]:
    return [derive_seed(setup.sim.seed, "repeat", k) % 2**31 for k in range(setup.corpus.repeats)]


def run_send(setup: DeskSetup, datasets, seed: int, **changes) -> dict:
    """Train one SEND model; multilabel heads are scored at their best threshold."""
    config = resolved_model(setup).replace(**changes)
    model = SendModel(config, derive_rng(seed, "init"))
    train_set, val_set = datasets
    report = train(model, train_set, val_set, dataclasses.replace(setup.train, seed=seed))
    val = validation_examples(val_set, config.capacity, seed)
    if config.head == "pse":
        return {"der": evaluate(model, val).der, "threshold": None, "epochs": len(report.records)}
    threshold, best = best_threshold(model, val)
    return {"der": best.der, "threshold": threshold, "epochs": len(report.records)}


@dataclass
class AblationTable:
    recipe: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def format(self) -> str:
        widths = [max(len(c), 10) for c in self.columns]
        head = "  ".join(c.ljust(w) for c, w in zip(self.columns, widths))
        lines = [head, "-" * len(head)]
        for row in self.rows:
            cells = []
            for c, w in zip(self.columns, widths):
                v = row[c]
                cells.append((f"{100 * v:.2f}%" if isinstance(v, float) else str(v)).ljust(w))
            lines.append("  ".join(cells).rstrip())
        return "\n".join(lines) + "\n"

    def records(self) -> str:
        return "".join(json.dumps({"recipe": self.recipe, **_round(r)}, sort_keys=True) + "\n" for r in self.rows)


def _round(row: dict) -> dict:
    return {k: round(v, 10) if isinstance(v, float) else v for k, v in row.items()}


def _mean_row(label: dict, results: list[dict], key: str = "der") -> dict:
    return {**label, key: float(np.mean([r[key] for r in results])),
            "per_seed": [round(r[key], 10) for r in results]}


def ablate_metrics(setup: DeskSetup) -> AblationTable:
    data = desk_datasets(setup)
    table = AblationTable("metrics", ["metric", "der"])
    for metric in ("cosine", "dot", "sigma_dot"):
        results = [run_send(setup, data, s, metric=metric) for s in repeat_seeds(setup)]
        table.rows.append(_mean_row({"metric": metric}, results))
    return table


POSTNET_PSE_ROWS = (
    ("none", "multilabel"),
    ("fcn", "multilabel"),
    ("fcn", "pse"),
    ("fsmn_fcn", "multilabel"),
    ("fsmn_fcn", "pse"),
)


def ablate_postnet_pse(setup: DeskSetup) -> AblationTable:
    """Every valid post-net x head pairing (the pse head needs a post-net)."""
    data = desk_datasets(setup)
    table = AblationTable("postnet_pse", ["post_net", "head", "der"])
    for post_net, head in POSTNET_PSE_ROWS:
        results = [run_send(setup, data, s, post_net=post_net, head=head) for s in repeat_seeds(setup)]
        table.rows.append(_mean_row({"post_net": post_net, "head": head}, results))
    return table


def run_sendti(setup: DeskSetup, datasets, seed: int, *, sc: bool, train_substitution: float,
               eval_substitutions: dict[str, float], mask_speech: bool = False) -> dict:
    config = resolved_model(setup)
    model = SendTiModel(config, derive_rng(seed, "init"))
    train_set, val_set = datasets
    train_sendti(model, train_set, val_set, dataclasses.replace(setup.train, seed=seed), sc=sc,
                 train_substitution=train_substitution)
    out = {}
    for name, rate in eval_substitutions.items():
        examples = ti_examples(val_set, config.capacity, seed, sc=sc, substitution=rate, label=f"eval-{name}")
        out[name] = evaluate_words(model, examples, mask_speech).wder
    return out


RECOGNITION_SUBSTITUTION = 0.2


def ablate_sendti_sc(setup: DeskSetup, training_texts=("grand", "recognition")) -> AblationTable:
    """SC separators on/off x training text; scored on both kinds of text."""
    data = desk_datasets(setup)
    rates = {"grand": 0.0, "recognition": RECOGNITION_SUBSTITUTION}
    table = AblationTable("sendti_sc", ["sc", "training_text", "grand", "recognition"])
    for sc in (False, True):
        for text in training_texts:
            results = [run_sendti(setup, data, s, sc=sc, train_substitution=rates[text], eval_substitutions=rates)
                       for s in repeat_seeds(setup)]
            row = {"sc": "yes" if sc else "no", "training_text": text}
            for name in rates:
                row[name] = float(np.mean([r[name] for r in results]))
                row[f"{name}_per_seed"] = [round(r[name], 10) for r in results]
            table.rows.append(row)
    return table


def run_recipe(name: str, setup: DeskSetup) -> AblationTable:
    if name == "metrics":
        return ablate_metrics(setup)
    if name == "postnet_pse":
        return ablate_postnet_pse(setup)
    if name == "sendti_sc":
        return ablate_sendti_sc(setup)
    raise ValueError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")


def default_setup(recipe: str, seed: int) -> DeskSetup:
    return desk_sendti_setup(seed) if recipe == "sendti_sc" else desk_send_setup(seed)
