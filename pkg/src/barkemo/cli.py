"""Command-line entry point: ``barkemo {synth,train,evaluate,predict,features}``.

Configuration comes from an optional JSON file (one object per section plus a
top-level ``seed``) and is then overridden by long-form flags, one per scalar
(``--fragment-len``, ``--epochs-max``, ``--mfcc-hop`` ...).

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 empty result.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import data as dp
from .audio_io import CANONICAL_RATE_HZ, AudioClip, read_wav, resample_linear, write_wav
from .errors import BarkEmoError, NoFragments
from .evaluation import render_report, report_from_predictions
from .features import MfccConfig, mfcc
from .model import BarkNet, BarkNetConfig, load_checkpoint, save_checkpoint
from .training import TrainConfig, evaluate_split, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EMPTY = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class AudioSection:
    sample_rate_hz: int = CANONICAL_RATE_HZ


@dataclasses.dataclass(frozen=True)
class DataSection:
    fragment_len: int = dp.DEFAULT_FRAGMENT_LEN
    hop: int = 0  # 0 means hop = fragment_len
    energy_gate: float = dp.DEFAULT_ENERGY_GATE
    normalize: bool = True
    n_per_class: int = 1260
    snr_db: float = 10.0


@dataclasses.dataclass(frozen=True)
class ModelSection:
    conv1_channels: int = 16
    conv1_kernel: int = 64
    conv1_stride: int = 8
    conv2_channels: int = 32
    conv2_kernel: int = 32
    conv2_stride: int = 4


@dataclasses.dataclass(frozen=True)
class SplitSection:
    train_n: int = 4000
    val_n: int = 800
    test_n: int = 1500


@dataclasses.dataclass(frozen=True)
class TrainSection:
    epochs_max: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 5


SECTIONS = {
    "audio": AudioSection,
    "data": DataSection,
    "split": SplitSection,
    "mfcc": MfccConfig,
    "model": ModelSection,
    "train": TrainSection,
}


def _override_flags():
    """Map each scalar to its flag; names shared by two sections get a section prefix."""
    owners = Counter(f.name for cls in SECTIONS.values() for f in dataclasses.fields(cls))
    flags = {}
    for section, cls in SECTIONS.items():
        for f in dataclasses.fields(cls):
            name = f.name if owners[f.name] == 1 else f"{section}_{f.name}"
            flags[name.replace("_", "-")] = (section, f.name, type(f.default))
    return flags


OVERRIDES = _override_flags()


def _parse_bool(text):
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


@dataclasses.dataclass
class RunConfig:
    seed: int = 0
    audio: AudioSection = AudioSection()
    data: DataSection = DataSection()
    split: SplitSection = SplitSection()
    mfcc: MfccConfig = MfccConfig()
    model: ModelSection = ModelSection()
    train: TrainSection = TrainSection()

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        cfg = cls()
        for key, value in doc.items():
            if key == "seed":
                cfg.seed = int(value)
            elif key in SECTIONS:
                if not isinstance(value, dict):
                    raise UsageError(f"config section {key!r} must be an object")
                setattr(cfg, key, dataclasses.replace(getattr(cfg, key), **value))
            else:
                raise UsageError(f"unknown config section {key!r}")
        return cfg

    def to_dict(self) -> dict:
        doc = {"seed": self.seed}
        for name in SECTIONS:
            doc[name] = dataclasses.asdict(getattr(self, name))
        return doc

    # resolved per-module configs; seeds all derive from the top-level seed

    @property
    def hop(self):
        return self.data.hop or self.data.fragment_len

    def split_config(self) -> dp.SplitConfig:
        s = self.split
        return dp.SplitConfig(s.train_n, s.val_n, s.test_n, seed=self.seed)

    def model_config(self) -> BarkNetConfig:
        return BarkNetConfig(fragment_len=self.data.fragment_len, seed=self.seed,
                             **dataclasses.asdict(self.model))

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **dataclasses.asdict(self.train))


def load_run_config(args) -> RunConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
    try:
        cfg = RunConfig.from_dict(doc)
        if args.seed is not None:
            cfg.seed = args.seed
        for flag, (section, name, _) in OVERRIDES.items():
            value = getattr(args, "set_" + flag.replace("-", "_"))
            if value is not None:
                setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **{name: value}))
        cfg.split_config()
        cfg.model_config().validate()
        cfg.train_config()
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return cfg


# --------------------------------------------------------------------------
# helpers


def _err(msg):
    print(f"barkemo: {msg}", file=sys.stderr)


def _load_items(cfg: RunConfig, manifest_path, fragment_len=None):
    rows, base = dp.read_manifest(manifest_path)
    return dp.load_fragments(rows, base, fragment_len or cfg.data.fragment_len, cfg.hop,
                             cfg.data.energy_gate, cfg.audio.sample_rate_hz, cfg.data.normalize)


def _read_clip(cfg: RunConfig, path) -> AudioClip:
    return resample_linear(read_wav(path), cfg.audio.sample_rate_hz)


def _read_checkpoint(path) -> BarkNet:
    return load_checkpoint(Path(path).read_bytes())


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig, out_dir) -> int:
    """Write one WAV per synthetic fragment plus ``manifest.csv``."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    items = dp.synth_dataset(cfg.data.n_per_class, cfg.data.fragment_len, cfg.audio.sample_rate_hz,
                             cfg.data.snr_db, cfg.seed)
    counters = Counter()
    rows = []
    for it in items:
        rel = f"wav/{it.label.name}_{counters[it.label]:05d}.wav"
        counters[it.label] += 1
        write_wav(out / rel, AudioClip(it.samples, cfg.audio.sample_rate_hz))
        rows.append(dp.ManifestRow(rel, it.label))
    manifest = out / "manifest.csv"
    manifest.write_text(dp.format_manifest(rows), encoding="utf-8")
    print(manifest)
    return EXIT_OK


def cmd_train(cfg: RunConfig, manifest, out_checkpoint, log_path=None) -> int:
    items = _load_items(cfg, manifest)
    train, val, _ = dp.stratified_split(items, cfg.split_config())
    net = BarkNet.init(cfg.model_config())
    net, log = fit(net, train, val, cfg.train_config(), on_epoch=lambda r: print(r.line(), flush=True))
    Path(out_checkpoint).write_bytes(save_checkpoint(net))
    if log_path:
        lines = [json.dumps({"epoch": r.epoch, "loss": r.train_loss, "val_acc": r.val_acc}) for r in log.records]
        Path(log_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"best_epoch={log.best_epoch} val_acc={log.best_val_acc:.6f}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, manifest, checkpoint, as_json=False, out_path=None) -> int:
    """Report on the test split that the same config and seed hold out in ``train``."""
    net = _read_checkpoint(checkpoint)
    items = _load_items(cfg, manifest, net.config.fragment_len)
    _, _, test = dp.stratified_split(items, cfg.split_config())
    _, preds = evaluate_split(net, test)
    report = report_from_predictions([it.label for it in test], preds)
    doc = json.dumps(report.to_dict(), indent=2)
    if out_path:
        Path(out_path).write_text(doc + "\n", encoding="utf-8")
    print(doc if as_json else render_report(report), end="\n" if as_json else "")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, checkpoint, wav_path) -> int:
    net = _read_checkpoint(checkpoint)
    clip = _read_clip(cfg, wav_path)
    windows = list(dp.iter_windows(clip, net.config.fragment_len, cfg.data.hop or net.config.fragment_len,
                                   cfg.data.energy_gate))
    if not windows:
        raise NoFragments(f"{wav_path}: no fragment of {net.config.fragment_len} samples passes the energy gate")
    votes = Counter()
    for i, (start, w) in enumerate(windows):
        label, probs = net.predict(dp.peak_normalize(w) if cfg.data.normalize else w)
        votes[label] += 1
        conf = " ".join(f"{name}={p:.4f}" for name, p in zip(dp.CLASS_NAMES, probs))
        print(f"fragment={i} start={start} class={label.name} {conf}")
    top = max(votes.values())
    clip_label = min(label for label, n in votes.items() if n == top)
    print(f"clip class={clip_label.name} votes={top}/{len(windows)}")
    return EXIT_OK


def cmd_features(cfg: RunConfig, wav_path) -> int:
    clip = _read_clip(cfg, wav_path)
    coeffs = mfcc(clip.samples, cfg.mfcc, clip.sample_rate_hz)
    for row in coeffs:
        print(" ".join(f"{v:.6f}" for v in row))
    return EXIT_OK


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for data synthesis, splitting, init and shuffling")
    overrides = common.add_argument_group("configuration overrides")
    for flag, (section, name, kind) in OVERRIDES.items():
        conv = _parse_bool if kind is bool else kind
        overrides.add_argument(f"--{flag}", dest="set_" + flag.replace("-", "_"), type=conv,
                               metavar=kind.__name__.upper(), help=f"{section}.{name}")

    parser = _Parser(prog="barkemo", description="Dog-vocalization emotion classifier on raw audio.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic WAV dataset and manifest")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("train", parents=[common], help="train a model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, metavar="CHECKPOINT")
    p.add_argument("--log", metavar="PATH", help="also write the epoch log as JSON lines")

    p = sub.add_parser("evaluate", parents=[common], help="classification report on the held-out test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--out", metavar="PATH", help="also write the JSON report to PATH")

    p = sub.add_parser("predict", parents=[common], help="classify each fragment of a WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav")

    p = sub.add_parser("features", parents=[common], help="print the MFCC matrix of a WAV file")
    p.add_argument("wav")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        if args.command == "synth":
            return cmd_synth(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.manifest, args.out, args.log)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.manifest, args.checkpoint, args.json, args.out)
        if args.command == "predict":
            return cmd_predict(cfg, args.checkpoint, args.wav)
        return cmd_features(cfg, args.wav)
    except UsageError as exc:
        _err(exc)
        return EXIT_USAGE
    except NoFragments as exc:
        _err(exc)
        return EXIT_EMPTY
    except (BarkEmoError, OSError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
