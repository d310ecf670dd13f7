"""Batch entry point: ``send-diar {simulate,train,infer,score,ablate}``.

Every command accepts ``--config`` (INI key-value file, see ``config``),
``--seed`` and ``--out``. The resolved configuration and seed are written
into the output directory so any run can be repeated exactly.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ConfigError, apply_section, read_config, write_config
from .corpus import (
    RttmError,
    apply_frontend,
    frame_labels_to_rttm,
    load_dataset,
    make_world,
    rttm_emit,
    rttm_parse,
    rttm_to_frame_labels,
    save_dataset,
    simulate_dataset,
    split_speakers,
)
from .recipes import RECIPES, DeskSetup, default_setup, desk_send_setup, resolved_model, run_recipe
from .scoring import der, der_with_mapping, wder
from .seeding import derive_rng
from .send import SendModel, decode_frames, make_example, send_forward
from .training import TrainingDiverged, train

log = logging.getLogger("send_diar")

FRAME_SHIFT = 0.01  # seconds per simulated frame, scaled by the frontend stride


class InvalidInput(Exception):
    pass


# ----------------------------------------------------------------------------
# configuration plumbing


def load_setup(path, seed: int, base: DeskSetup | None = None) -> DeskSetup:
    setup = base or desk_send_setup(seed)
    sections = read_config(path) if path else {}
    known = {"corpus", "sim", "model", "train", "optimizer"}
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    sim = apply_section(setup.sim, sections.get("sim", {}), "sim")
    sim = dataclasses.replace(sim, seed=seed)
    corpus = apply_section(setup.corpus, sections.get("corpus", {}), "corpus")
    model = apply_section(setup.model, sections.get("model", {}), "model")
    optimizer = apply_section(setup.train.optimizer, sections.get("optimizer", {}), "optimizer")
    train_cfg = apply_section(setup.train, sections.get("train", {}), "train")
    train_cfg = dataclasses.replace(train_cfg, optimizer=optimizer, seed=seed)
    for name, value in dataclasses.asdict(corpus).items():
        if value < 0 or (name in ("stride", "repeats") and value < 1):
            raise ConfigError(f"[corpus] {name} = {value} is out of range")
    return DeskSetup(sim, corpus, model, train_cfg)


def write_run_files(out: Path, command: str, seed: int, setup: DeskSetup, **extra) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.ini", {
        "corpus": setup.corpus,
        "sim": {k: v for k, v in dataclasses.asdict(setup.sim).items() if k != "seed"},
        "model": setup.model,
        "train": {k: v for k, v in dataclasses.asdict(setup.train).items() if k != "seed"},
        "optimizer": setup.train.optimizer,
    })
    (out / "run.json").write_text(json.dumps({"command": command, "seed": seed, **extra}, sort_keys=True) + "\n")


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise InvalidInput(f"{what} {path} does not exist")
    return path


# ----------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    setup = load_setup(args.config, args.seed)
    c = setup.corpus
    out = Path(args.out)
    world = make_world(setup.sim, c.train_speakers + c.validation_speakers)
    train_pool, val_pool = split_speakers(c.train_speakers, c.validation_speakers)
    for split, pool, count in (("train", train_pool, c.train_samples),
                               ("validation", val_pool, c.validation_samples)):
        dataset = simulate_dataset(setup.sim, count, world, pool, split)
        save_dataset(dataset, out / split)
        print(f"{split}: {len(dataset)} mixtures, overlap ratio {dataset.overlap_ratio():.3f}")
    write_run_files(out, "simulate", args.seed, setup)
    return 0


def _load_split(root: Path, split: str, setup: DeskSetup):
    dataset = load_dataset(_require_dir(root / split, f"{split} split"))
    if dataset.samples:
        dataset = apply_frontend(dataset, setup.corpus.context, setup.corpus.stride)
    return dataset


def cmd_train(args) -> int:
    setup = load_setup(args.config, args.seed)
    root = _require_dir(Path(args.dataset), "dataset")
    train_set = _load_split(root, "train", setup)
    val_set = _load_split(root, "validation", setup)
    if not train_set.samples or not val_set.samples:
        raise InvalidInput("training needs non-empty train and validation splits")
    setup = dataclasses.replace(setup, sim=dataclasses.replace(train_set.config, seed=args.seed))
    model_cfg = resolved_model(setup)
    setup = dataclasses.replace(setup, model=model_cfg)
    model = SendModel(model_cfg, derive_rng(args.seed, "init"))
    out = Path(args.out)
    report = train(model, train_set, val_set, setup.train, out)
    write_run_files(out, "train", args.seed, setup, dataset=str(root))
    print(f"trained {len(report.records)} epochs, validation DER {100 * report.final_der:.2f}%")
    return 0


def load_trained(checkpoint_dir: Path) -> tuple[SendModel, DeskSetup]:
    _require_dir(checkpoint_dir, "checkpoint directory")
    run = json.loads((checkpoint_dir / "run.json").read_text())
    setup = load_setup(checkpoint_dir / "config.ini", run["seed"])
    model = SendModel(setup.model, 0)
    ad.load_checkpoint(checkpoint_dir / "model", model.parameters())
    return model, setup


def cmd_infer(args) -> int:
    model, setup = load_trained(Path(args.checkpoint))
    dataset = load_dataset(_require_dir(Path(args.dataset), "dataset"))
    dataset = apply_frontend(dataset, setup.corpus.context, setup.corpus.stride)
    shift = FRAME_SHIFT * setup.corpus.stride
    capacity = setup.model.capacity
    ref_lines, hyp_lines = [], []
    for i, sample in enumerate(dataset.samples):
        ex = make_example(dataset, i, capacity, derive_rng(args.seed, "infer-bank", i), fresh_enrollment=False)
        hyp = decode_frames(send_forward(ex.features, ex.bank, model), model.table, args.threshold)
        names = [f"slot{n}" for n in range(capacity)]
        for col, slot in enumerate(ex.bank.positive_slots):
            names[slot] = f"spk{sample.speaker_ids[col]}"
        rec = f"mix{i:05d}"
        hyp_lines += rttm_emit(frame_labels_to_rttm(hyp, shift, rec, names)).splitlines()
        ref_names = [f"spk{s}" for s in sample.speaker_ids]
        ref_lines += rttm_emit(frame_labels_to_rttm(sample.labels, shift, rec, ref_names)).splitlines()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ref.rttm").write_text("".join(line + "\n" for line in ref_lines))
    (out / "hyp.rttm").write_text("".join(line + "\n" for line in hyp_lines))
    (out / "run.json").write_text(json.dumps({"command": "infer", "seed": args.seed,
                                              "checkpoint": str(args.checkpoint), "frame_shift": shift},
                                             sort_keys=True) + "\n")
    print(f"wrote {len(hyp_lines)} hypothesis segments for {len(dataset)} recordings")
    return 0


def _rttm_frames(ref_path: Path, hyp_path: Path, frame_shift: float):
    ref = defaultdict(list)
    hyp = defaultdict(list)
    for seg in rttm_parse(ref_path.read_text()):
        ref[seg.recording_id].append(seg)
    for seg in rttm_parse(hyp_path.read_text()):
        hyp[seg.recording_id].append(seg)
    refs, hyps = [], []
    for rec in sorted(set(ref) | set(hyp)):
        order = sorted({s.speaker_id for s in ref[rec]})
        order += sorted({s.speaker_id for s in hyp[rec]} - set(order))
        end = max(s.end for s in ref[rec] + hyp[rec])
        frames = int(np.ceil(end / frame_shift)) + 1
        refs.append(rttm_to_frame_labels(ref[rec], frame_shift, order, frames))
        hyps.append(rttm_to_frame_labels(hyp[rec], frame_shift, order, frames))
    return refs, hyps


def _read_words(path: Path) -> list[str]:
    return path.read_text().split()


def cmd_score(args) -> int:
    ref_path, hyp_path = Path(args.ref), Path(args.hyp)
    for p in (ref_path, hyp_path):
        if not p.is_file():
            raise InvalidInput(f"{p} does not exist")
    if ref_path.suffix == ".words":
        report = wder(_read_words(ref_path), _read_words(hyp_path))
    else:
        refs, hyps = _rttm_frames(ref_path, hyp_path, args.frame_shift)
        if not refs:
            raise InvalidInput("no segments to score")
        if args.mapping:
            width = max(r.shape[1] for r in refs)
            pad = [np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in refs]
            hpad = [np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in hyps]
            report = der_with_mapping(np.concatenate(pad), np.concatenate(hpad), args.mode)
        else:
            # columns share one name order per recording; pad to a common width to pool
            width = max(r.shape[1] for r in refs)
            ref = np.concatenate([np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in refs])
            hyp = np.concatenate([np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in hyps])
            report = der(ref, hyp, args.mode)
    print(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "score.txt").write_text(str(report) + "\n")
        (out / "score.jsonl").write_text(report.to_record() + "\n")
    return 0


def cmd_ablate(args) -> int:
    if args.recipe not in RECIPES:
        raise InvalidInput(f"unknown recipe {args.recipe!r}; choose from {', '.join(RECIPES)}")
    setup = load_setup(args.config, args.seed, default_setup(args.recipe, args.seed))
    out = Path(args.out)
    write_run_files(out, "ablate", args.seed, setup, recipe=args.recipe)
    table = run_recipe(args.recipe, setup)
    (out / "table.txt").write_text(table.format())
    (out / "results.jsonl").write_text(table.records())
    print(table.format(), end="")
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="send-diar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="INI key-value configuration file")
        p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("simulate", help="simulate train and validation mixtures")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train SEND on a simulated dataset")
    p.add_argument("dataset", help="directory written by simulate")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="decode a dataset with a trained model into RTTM")
    p.add_argument("checkpoint", help="directory written by train")
    p.add_argument("dataset", help="dataset split directory (e.g. <sim>/validation)")
    common(p)
    p.add_argument("--threshold", type=float, default=0.5, help="multilabel head decision threshold")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("score", help="DER between RTTM files, or wDER between .words files")
    p.add_argument("ref")
    p.add_argument("hyp")
    common(p, out_required=False)
    p.add_argument("--mode", choices=("full", "ignore"), default="full")
    p.add_argument("--frame-shift", type=float, default=FRAME_SHIFT, help="scoring frame length in seconds")
    p.add_argument("--mapping", action="store_true", help="search the best speaker mapping (Hungarian)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="run an ablation recipe and print its table")
    p.add_argument("--recipe", required=True, help=f"one of {', '.join(RECIPES)}")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "seed", 0) < 0:
        print("send-diar: error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (InvalidInput, ConfigError, RttmError, FileNotFoundError, KeyError) as exc:
        print(f"send-diar: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"send-diar: invalid input: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, OSError, RuntimeError) as exc:
        print(f"send-diar: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
