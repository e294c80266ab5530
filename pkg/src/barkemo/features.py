"""MFCC feature extraction.

pre-emphasis -> framing + Hamming window -> radix-2 FFT power spectrum ->
mel filterbank -> log -> orthonormal DCT-II -> first ``n_coeffs`` coefficients.
This path is optional; the classifier consumes raw fragments by default.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class MfccConfig:
    frame_len: int = 400  # 25 ms at 16 kHz
    hop: int = 160
    fft_len: int = 512
    n_mels: int = 26
    n_coeffs: int = 13
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fft_len <= 0 or self.fft_len & (self.fft_len - 1):
            raise ValueError(f"fft_len must be a power of two, got {self.fft_len}")
        if not 0 < self.frame_len <= self.fft_len:
            raise ValueError("frame_len must be in 1..fft_len")
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        if not 0 < self.n_coeffs <= self.n_mels:
            raise ValueError("need 0 < n_coeffs <= n_mels")
        if not 0 <= self.pre_emphasis < 1:
            raise ValueError("pre_emphasis must be in [0, 1)")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


def pre_emphasize(x, alpha: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    return y


def hamming(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / (n - 1))


def n_frames(n_samples: int, frame_len: int, hop: int) -> int:
    return (n_samples - frame_len) // hop + 1 if n_samples >= frame_len else 0


def frame_and_window(x, cfg: MfccConfig) -> np.ndarray:
    """Return windowed frames zero-padded to ``fft_len``, shape ``[frames, fft_len]``."""
    x = np.asarray(x, dtype=np.float64)
    count = n_frames(len(x), cfg.frame_len, cfg.hop)
    out = np.zeros((count, cfg.fft_len))
    if count:
        idx = np.arange(count)[:, None] * cfg.hop + np.arange(cfg.frame_len)
        out[:, :cfg.frame_len] = x[idx] * hamming(cfg.frame_len)
    return out


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)].astype(np.complex128).reshape(-1, n)
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(a.shape[0], n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(-1, n)
        m *= 2
    return a.reshape(*lead, n)


def power_spectrum(frame) -> np.ndarray:
    """|X[p]|^2 for p = 0..fft_len/2 (works on a single frame or a stack)."""
    spec = fft(frame)
    half = spec[..., : spec.shape[-1] // 2 + 1]
    return half.real ** 2 + half.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_peaks_hz(cfg: MfccConfig, sample_rate_hz: int) -> np.ndarray:
    """Edge and peak frequencies: ``n_mels + 2`` points equally spaced in mel."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2), cfg.n_mels + 2))


def mel_filterbank(cfg: MfccConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters, shape ``[n_mels, fft_len/2 + 1]``.

    Filter j rises linearly from point j to a weight of 1 at point j+1 and falls
    back to 0 at point j+2, evaluated at each FFT bin's centre frequency.
    """
    pts = mel_peaks_hz(cfg, sample_rate_hz)
    freqs = np.arange(cfg.fft_len // 2 + 1) * sample_rate_hz / cfg.fft_len
    left, centre, right = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - left) / (centre - left)
    falling = (right - freqs) / (right - centre)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank.setflags(write=False)
    return bank


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k is basis function k."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    mat[0] /= np.sqrt(2.0)
    return mat


def mel_energies(x, cfg: MfccConfig, sample_rate_hz: int) -> np.ndarray:
    """Filterbank energies per frame, ``[frames, n_mels]``, before the log."""
    frames = frame_and_window(pre_emphasize(x, cfg.pre_emphasis), cfg)
    return power_spectrum(frames) @ mel_filterbank(cfg, sample_rate_hz).T


def mfcc(x, cfg: MfccConfig = MfccConfig(), sample_rate_hz: int = 16000) -> np.ndarray:
    """MFCC matrix of shape ``[frames, n_coeffs]``; coefficient 0 is kept."""
    log_mel = np.log(np.maximum(mel_energies(x, cfg, sample_rate_hz), cfg.log_floor))
    return log_mel @ dct_matrix(cfg.n_mels)[: cfg.n_coeffs].T
