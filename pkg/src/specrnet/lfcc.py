"""Linear-frequency cepstral coefficient front-end.

Pipeline: 25 ms periodic-Hann frames at a 10 ms hop, 512-point power
spectrum, an 80-filter triangular bank spaced uniformly in Hz, natural log,
orthonormal DCT-II. A 64600-sample clip yields a (1, 80, 402) feature map.

Internals run in float64 for stable numerics; outputs are float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .errors import InputTooShort


@dataclass(frozen=True)
class LfccConfig:
    sample_rate: int = 16000
    win_ms: int = 25
    hop_ms: int = 10
    n_fft: int = 512
    n_filters: int = 80
    n_lfcc: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-10

    @property
    def win_len(self) -> int:
        return self.sample_rate * self.win_ms // 1000

    @property
    def hop_len(self) -> int:
        return self.sample_rate * self.hop_ms // 1000

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.win_len) // self.hop_len


def frame_count(n_samples: int, cfg: LfccConfig = LfccConfig()) -> int:
    return cfg.n_frames(n_samples)


def frame_and_window(samples: np.ndarray, cfg: LfccConfig = LfccConfig()) -> np.ndarray:
    """Slice into overlapping frames and apply the periodic Hann window.

    Returns a (frames, win_len) float64 array.
    """
    samples = np.asarray(samples, dtype=np.float64)
    win_len, hop = cfg.win_len, cfg.hop_len
    if len(samples) < win_len:
        raise InputTooShort(f"need at least {win_len} samples, got {len(samples)}")
    n_frames = cfg.n_frames(len(samples))
    idx = np.arange(win_len)[None, :] + hop * np.arange(n_frames)[:, None]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_len) / win_len)
    return samples[idx] * window


def power_spectrum(frames: np.ndarray, n_fft: int = 512) -> np.ndarray:
    """|rFFT|^2 of zero-padded frames: (frames, n_fft // 2 + 1)."""
    frames = np.asarray(frames, dtype=np.float64)
    spec = np.fft.rfft(frames, n=n_fft, axis=-1)
    return (spec.real ** 2 + spec.imag ** 2)


@lru_cache(maxsize=8)
def linear_filterbank(cfg: LfccConfig = LfccConfig()) -> np.ndarray:
    """Triangular filters with linearly spaced centers: (n_filters, n_fft//2+1).

    82 edge points span [f_min, f_max]; filter i rises over
    [edge_i, edge_{i+1}] and falls over [edge_{i+1}, edge_{i+2}].
    """
    if not (cfg.f_min < cfg.f_max <= cfg.sample_rate / 2):
        raise ValueError("need f_min < f_max <= Nyquist")
    n_bins = cfg.n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    edges = np.linspace(cfg.f_min, cfg.f_max, cfg.n_filters + 2)
    bank = np.zeros((cfg.n_filters, n_bins))
    for i in range(cfg.n_filters):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        bank[i] = np.maximum(0.0, np.minimum(rising, falling))
    bank.flags.writeable = False  # cached and shared across callers
    return bank


@lru_cache(maxsize=8)
def _dct_basis(n_filters: int, n_lfcc: int) -> np.ndarray:
    # column j of dct(I, axis=0) is the transform of e_j, so rows index the
    # coefficient and columns the filter
    basis = dct(np.eye(n_filters), type=2, norm="ortho", axis=0)
    basis = np.ascontiguousarray(basis[:n_lfcc])  # (coefficient, filter)
    basis.flags.writeable = False
    return basis


def lfcc(samples: np.ndarray, cfg: LfccConfig = LfccConfig()) -> np.ndarray:
    """Full front-end: waveform -> float32 feature map of shape (1, n_lfcc, N)."""
    frames = frame_and_window(samples, cfg)
    power = power_spectrum(frames, cfg.n_fft)
    energies = power @ linear_filterbank(cfg).T
    logged = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = logged @ _dct_basis(cfg.n_filters, cfg.n_lfcc).T  # (frames, n_lfcc)
    return np.ascontiguousarray(coeffs.T[None, :, :], dtype=np.float32)
