"""Seeded datasets of simulated mixtures and their on-disk form.

On disk a dataset is a directory holding ``manifest.json``, ``world.{bin,manifest}``
and one ``samples/NNNNN.{bin,manifest}`` record per mixture, all written
through the checkpoint array format.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import load_arrays, save_arrays
from ..seeding import derive_rng
from .frontend import frontend, subsample_labels
from .simulate import MixtureSample, SimConfig, SpeakerWorld, simulate_mixture, synth_world

_SAMPLE_FIELDS = ("features", "labels", "speaker_ids", "enrollments", "words", "word_spans", "word_speakers")
_INT_FIELDS = {"labels", "speaker_ids", "words", "word_spans", "word_speakers"}


@dataclass
class Dataset:
    samples: list[MixtureSample]
    world: SpeakerWorld
    speaker_pool: np.ndarray  # which world speakers this split draws from
    config: SimConfig
    context: int = 0
    stride: int = 1

    def __len__(self):
        return len(self.samples)

    def overlap_ratio(self) -> float:
        stats = np.array([s.overlap_stats() for s in self.samples]).reshape(-1, 2)
        speech = stats[:, 1].sum()
        return float(stats[:, 0].sum() / speech) if speech else 0.0


def split_speakers(num_train: int, num_val: int) -> tuple[np.ndarray, np.ndarray]:
    return np.arange(num_train), np.arange(num_train, num_train + num_val)


def simulate_dataset(config: SimConfig, num_samples: int, world: SpeakerWorld, speaker_pool,
                     split: str = "train") -> Dataset:
    """Sample ``i`` uses its own stream derived from ``(config.seed, split, i)``."""
    samples = [
        simulate_mixture(config, world, derive_rng(config.seed, "mixture", split, i), speaker_pool)
        for i in range(num_samples)
    ]
    return Dataset(samples, world, np.asarray(speaker_pool), config)


def make_world(config: SimConfig, num_speakers: int) -> SpeakerWorld:
    return synth_world(config, num_speakers, derive_rng(config.seed, "world"))


def apply_frontend(dataset: Dataset, context: int = 3, stride: int = 6) -> Dataset:
    """Stack/subsample features; labels by window majority; word spans rescaled."""
    out = []
    for s in dataset.samples:
        spans = s.word_spans.copy()
        if len(spans):
            spans[:, 0] = spans[:, 0] // stride
            spans[:, 1] = np.maximum(-(-spans[:, 1] // stride), spans[:, 0] + 1)
        out.append(dataclasses.replace(
            s,
            features=frontend(s.features, context, stride),
            labels=subsample_labels(s.labels, stride),
            word_spans=spans,
        ))
    return dataclasses.replace(dataset, samples=out, context=context, stride=stride)


def _config_record(config: SimConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}


def config_from_record(record: dict) -> SimConfig:
    fields = {f.name: f for f in dataclasses.fields(SimConfig)}
    kwargs = {}
    for key, value in record.items():
        if key not in fields:
            raise ValueError(f"unknown simulation setting {key!r}")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return SimConfig(**kwargs)


def save_dataset(dataset: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    save_arrays(directory / "world", {
        "means": dataset.world.means,
        "projection": dataset.world.projection,
        "word_signatures": dataset.world.word_signatures,
        "speaker_pool": dataset.speaker_pool,
    })
    entries = []
    for i, s in enumerate(dataset.samples):
        stem = f"samples/{i:05d}"
        save_arrays(directory / stem, {name: getattr(s, name) for name in _SAMPLE_FIELDS})
        overlapped, speech = s.overlap_stats()
        entries.append({"record": stem, "frames": s.num_frames, "speakers": len(s.speaker_ids),
                        "overlap_frames": overlapped, "speech_frames": speech})
    manifest = {
        "num_samples": len(dataset.samples),
        "overlap_ratio": round(dataset.overlap_ratio(), 6),
        "total_frames": int(sum(s.num_frames for s in dataset.samples)),
        "context": dataset.context,
        "stride": dataset.stride,
        "config": _config_record(dataset.config),
        "samples": entries,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    world_arrays = load_arrays(directory / "world")
    world = SpeakerWorld(world_arrays["means"], world_arrays["projection"], world_arrays["word_signatures"])
    samples = []
    for entry in manifest["samples"]:
        arrays = load_arrays(directory / entry["record"])
        kwargs = {name: arrays[name].astype(np.int64) if name in _INT_FIELDS else arrays[name]
                  for name in _SAMPLE_FIELDS}
        samples.append(MixtureSample(**kwargs))
    return Dataset(samples, world, world_arrays["speaker_pool"].astype(np.int64),
                   config_from_record(manifest["config"]), manifest["context"], manifest["stride"])
