"""Fragments, manifests, the stratified train/val/test split, and synthetic data."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from .audio_io import CANONICAL_RATE_HZ, AudioClip, read_wav, resample_linear
from .errors import InsufficientData, MalformedRow, UnknownLabel

DEFAULT_FRAGMENT_LEN = 12000
DEFAULT_ENERGY_GATE = 0.01


class EmotionClass(enum.IntEnum):
    aggressive = 0
    arrogant = 1
    fear_and_pain = 2
    happy = 3
    sad = 4

    @classmethod
    def parse(cls, name: str) -> "EmotionClass":
        try:
            return cls[name]
        except KeyError:
            raise UnknownLabel(f"unknown label {name!r}; expected one of {', '.join(CLASS_NAMES)}") from None


CLASS_NAMES = tuple(c.name for c in EmotionClass)
N_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class LabeledFragment:
    samples: np.ndarray
    label: EmotionClass


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: EmotionClass


Manifest = List[ManifestRow]


@dataclass(frozen=True)
class SplitConfig:
    train_n: int = 4000
    val_n: int = 800
    test_n: int = 1500
    seed: int = 0

    def __post_init__(self):
        for name in ("train_n", "val_n", "test_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def sizes(self):
        return {"train": self.train_n, "val": self.val_n, "test": self.test_n}


# --------------------------------------------------------------------------
# segmentation


def window_starts(n_samples: int, fragment_len: int, hop: int) -> range:
    if fragment_len <= 0 or hop <= 0:
        raise ValueError("fragment_len and hop must be positive")
    if n_samples < fragment_len:
        return range(0)
    return range(0, (n_samples - fragment_len) // hop * hop + 1, hop)


def iter_windows(clip: AudioClip, fragment_len: int = DEFAULT_FRAGMENT_LEN, hop: int | None = None,
                 energy_gate: float = DEFAULT_ENERGY_GATE) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(start, window)`` for every full window whose RMS exceeds the gate."""
    hop = fragment_len if hop is None else hop
    x = clip.samples
    for start in window_starts(len(x), fragment_len, hop):
        w = x[start:start + fragment_len]
        if math.sqrt(float(np.mean(w * w))) > energy_gate:
            yield start, w.copy()


def segment_clip(clip: AudioClip, fragment_len: int = DEFAULT_FRAGMENT_LEN, hop: int | None = None,
                 energy_gate: float = DEFAULT_ENERGY_GATE) -> List[np.ndarray]:
    """Cut ``clip`` into full, non-padded windows that pass the RMS energy gate.

    ``hop`` defaults to ``fragment_len`` (non-overlapping windows).
    """
    return [w for _, w in iter_windows(clip, fragment_len, hop, energy_gate)]


def peak_normalize(fragment: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(fragment))) if len(fragment) else 0.0
    return fragment / peak if peak > 0 else np.array(fragment, dtype=np.float64)


# --------------------------------------------------------------------------
# manifests


def load_manifest(text: str) -> Manifest:
    """Parse ``path,label`` lines; blank lines are skipped.

    The label is taken after the last comma so paths may contain commas.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if "," not in line:
            raise MalformedRow(f"line {lineno}: expected 'path,label', got {line!r}")
        path, label = (part.strip() for part in line.rsplit(",", 1))
        if not path:
            raise MalformedRow(f"line {lineno}: empty path")
        try:
            rows.append(ManifestRow(path, EmotionClass.parse(label)))
        except UnknownLabel as exc:
            raise UnknownLabel(f"line {lineno}: {exc}") from None
    return rows


def format_manifest(rows: Sequence[ManifestRow]) -> str:
    return "".join(f"{r.path},{r.label.name}\n" for r in rows)


def read_manifest(path) -> Tuple[Manifest, Path]:
    """Read a manifest file; returns the rows and the directory paths resolve against."""
    path = Path(path)
    return load_manifest(path.read_text(encoding="utf-8")), path.parent


def load_fragments(rows: Sequence[ManifestRow], base_dir, fragment_len: int = DEFAULT_FRAGMENT_LEN,
                   hop: int | None = None, energy_gate: float = DEFAULT_ENERGY_GATE,
                   sample_rate_hz: int = CANONICAL_RATE_HZ, normalize: bool = True) -> List[LabeledFragment]:
    """Decode, resample, segment and (optionally) peak-normalize every manifest entry."""
    items = []
    for row in rows:
        clip = resample_linear(read_wav(Path(base_dir) / row.path), sample_rate_hz)
        for frag in segment_clip(clip, fragment_len, hop, energy_gate):
            items.append(LabeledFragment(peak_normalize(frag) if normalize else frag, row.label))
    return items


# --------------------------------------------------------------------------
# splitting and batching


def _apportion(total: int, weights: Sequence[int]) -> List[int]:
    """Largest-remainder apportionment of ``total`` by ``weights``; ties go to the lower index."""
    pool = sum(weights)
    quotas = [total * w // pool for w in weights]
    remainders = [(total * w % pool, -i) for i, w in enumerate(weights)]
    for _, neg_i in sorted(remainders, reverse=True)[: total - sum(quotas)]:
        quotas[-neg_i] += 1
    return quotas


def stratified_split(items: Sequence[LabeledFragment], cfg: SplitConfig):
    """Split into (train, val, test) with per-class counts proportional to the pool.

    Each split's per-class count is within one item of its exact proportional
    share. Items are drawn without replacement from a seeded per-class shuffle.
    """
    by_class = {c: [i for i, it in enumerate(items) if it.label == c] for c in EmotionClass}
    present = [c for c in EmotionClass if by_class[c]]
    requested = cfg.train_n + cfg.val_n + cfg.test_n
    if requested > len(items):
        raise InsufficientData(f"split sizes total {requested} but only {len(items)} items are available",
                               split="train")

    quotas = {name: dict(zip(present, _apportion(n, [len(by_class[c]) for c in present])))
              for name, n in cfg.sizes.items()}
    for c in present:
        used = 0
        for name in cfg.sizes:
            used += quotas[name][c]
            if used > len(by_class[c]):
                raise InsufficientData(
                    f"class {c.name} has {len(by_class[c])} items, too few to fill the {name} split",
                    label=c, split=name)

    rng = np.random.default_rng(cfg.seed)
    chosen = {name: [] for name in cfg.sizes}
    for c in present:
        order = [by_class[c][j] for j in rng.permutation(len(by_class[c]))]
        offset = 0
        for name in cfg.sizes:
            q = quotas[name][c]
            chosen[name].extend(order[offset:offset + q])
            offset += q
    splits = []
    for name in cfg.sizes:
        idx = chosen[name]
        splits.append([items[idx[j]] for j in rng.permutation(len(idx))])
    return tuple(splits)


def batch_iterator(items: Sequence, batch_size: int, seed: int) -> List[list]:
    """Seeded shuffle of ``items`` chunked into batches; the last batch may be short."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    order = np.random.default_rng(seed).permutation(len(items))
    return [[items[i] for i in order[s:s + batch_size]] for s in range(0, len(items), batch_size)]


# --------------------------------------------------------------------------
# synthetic data


def class_frequency_hz(label: int) -> float:
    return 400.0 * (int(label) + 1)


def synth_dataset(n_per_class: int, fragment_len: int = DEFAULT_FRAGMENT_LEN,
                  sample_rate_hz: int = CANONICAL_RATE_HZ, snr_db: float = 10.0,
                  seed: int = 0) -> List[LabeledFragment]:
    """Noisy sine fragments standing in for labeled recordings.

    Class k is a 0.5-amplitude sine at 400*(k+1) Hz with random phase. White
    Gaussian noise is rescaled per fragment so the measured signal-to-noise
    power ratio equals ``snr_db`` exactly; ``snr_db = inf`` adds no noise.
    Items come out class by class.
    """
    if n_per_class <= 0:
        raise ValueError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(fragment_len) / sample_rate_hz
    out = []
    for c in EmotionClass:
        omega = 2 * np.pi * class_frequency_hz(c)
        for _ in range(n_per_class):
            phase = rng.uniform(0, 2 * np.pi)
            signal = 0.5 * np.sin(omega * t + phase)
            noise = rng.standard_normal(fragment_len)
            if math.isinf(snr_db) and snr_db > 0:
                noise[:] = 0.0
            else:
                target = np.mean(signal ** 2) / 10 ** (snr_db / 10)
                noise *= math.sqrt(target / np.mean(noise ** 2))
            out.append(LabeledFragment(signal + noise, c))
    return out


def stack(items: Sequence[LabeledFragment]) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(x, labels)`` with x shaped ``[n, 1, fragment_len]``."""
    x = np.stack([it.samples for it in items])[:, None, :]
    y = np.array([int(it.label) for it in items], dtype=np.int64)
    return x, y
