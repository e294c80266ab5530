"""16-bit PCM WAV codec and linear resampling.

Decoding accepts mono or stereo 16-bit integer PCM; encoding always writes the
canonical minimal mono file (44-byte header followed by the samples).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingMagic, Truncated, UnsupportedFormat, WavError

CANONICAL_RATE_HZ = 16000
PCM_TAG = 1
FULL_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray = field(repr=False)  # float64, mono, in [-1, 1]
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def parse_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string holding 16-bit integer PCM.

    Unknown chunks are skipped. Stereo input is downmixed by averaging the
    two channels.
    """
    data = bytes(data)
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MissingMagic("not a RIFF/WAVE file")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16 or body + size > len(data):
                raise Truncated(f"fmt chunk declares {size} bytes, {len(data) - body} available")
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag != PCM_TAG or bits != 16:
                raise UnsupportedFormat(f"format tag {tag}, {bits}-bit; only 16-bit PCM (tag 1) is decoded")
            if channels not in (1, 2):
                raise UnsupportedFormat(f"{channels} channels; only mono or stereo is decoded")
            if rate == 0:
                raise UnsupportedFormat("sample rate 0")
            fmt = (channels, rate)
        elif chunk_id == b"data":
            if fmt is None:
                raise WavError("data chunk precedes fmt chunk")
            if body + size > len(data):
                raise Truncated(f"data chunk declares {size} bytes, {len(data) - body} available")
            channels, rate = fmt
            n_frames = size // (2 * channels)
            ints = np.frombuffer(data, dtype="<i2", count=n_frames * channels, offset=body)
            samples = ints.astype(np.float64) / FULL_SCALE
            if channels == 2:
                samples = samples.reshape(-1, 2).mean(axis=1)
            return AudioClip(samples, rate)
        # chunks are word aligned
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavError("no fmt chunk")
    raise WavError("no data chunk")


def emit_wav(clip: AudioClip) -> bytes:
    """Encode ``clip`` as a canonical mono 16-bit PCM WAV byte string."""
    ints = np.clip(np.rint(clip.samples * FULL_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    rate = int(clip.sample_rate_hz)
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, PCM_TAG, 1, rate, rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload


def resample_linear(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Linearly interpolate ``clip`` onto a ``target_rate_hz`` grid.

    Output sample i sits at source position i * src/target; positions past the
    last source sample clamp to it.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate_hz}")
    src = int(clip.sample_rate_hz)
    x = clip.samples
    if src == target_rate_hz or len(x) == 0:
        return AudioClip(x.copy(), target_rate_hz)
    n_out = len(x) * target_rate_hz // src
    # exact integer position arithmetic: i*src = lo*target + rem
    num = np.arange(n_out, dtype=np.int64) * src
    lo = num // target_rate_hz
    frac = (num % target_rate_hz) / target_rate_hz
    hi = np.minimum(lo + 1, len(x) - 1)
    lo = np.minimum(lo, len(x) - 1)
    return AudioClip(x[lo] * (1.0 - frac) + x[hi] * frac, target_rate_hz)


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return parse_wav(fh.read())


def write_wav(path, clip: AudioClip) -> None:
    with open(path, "wb") as fh:
        fh.write(emit_wav(clip))
