"""WAV ingestion and the waveform preprocessing recipe.

The recipe mirrors common anti-spoofing data preparation: resample to
16 kHz mono, cap silence runs at 0.2 s, then fix the length to 64600
samples (about 4 s) by truncating or tiling.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import EmptyAfterTrim, MalformedWav, UnsupportedEncoding

TARGET_RATE = 16000
TARGET_LEN = 64600

# silence detection: 20 ms frames, threshold 40 dB below the peak-RMS frame
SILENCE_FRAME_S = 0.02
SILENCE_DB_BELOW_PEAK = 40.0


@dataclass(frozen=True)
class AudioClip:
    """Mono float32 sample buffer in [-1, 1] plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


# --- WAV reading -----------------------------------------------------------

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM 16-bit or IEEE float32, 1-2 channels).

    16-bit samples are scaled by 1/32768; stereo is averaged to mono.
    Raises MalformedWav for structural problems and UnsupportedEncoding for
    any other codec or layout.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    off = 12
    while off + 8 <= len(blob):
        cid = blob[off:off + 4]
        (size,) = struct.unpack_from("<I", blob, off + 4)
        body = blob[off + 8:off + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedWav(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedWav(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        off += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise MalformedWav(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _byte_rate, _block_align, bits = fmt
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        raise UnsupportedEncoding(f"{path}: WAVE_FORMAT_EXTENSIBLE is not supported")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels (want 1 or 2)")
    if rate <= 0:
        raise MalformedWav(f"{path}: non-positive sample rate {rate}")

    if tag == _WAVE_FORMAT_PCM and bits == 16:
        frames = np.frombuffer(data[:len(data) // 2 * 2], dtype="<i2")
        samples = frames.astype(np.float32) / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        frames = np.frombuffer(data[:len(data) // 4 * 4], dtype="<f4")
        samples = frames.astype(np.float32)
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag}, {bits}-bit")

    if channels == 2:
        samples = samples[:len(samples) // 2 * 2].reshape(-1, 2).mean(axis=1)
    return AudioClip(np.asarray(samples, dtype=np.float32), int(rate))


def to_mono(clip: AudioClip) -> AudioClip:
    """Collapse any extra channel axis by arithmetic mean (no-op for mono)."""
    if clip.samples.ndim == 1:
        return clip
    return AudioClip(clip.samples.mean(axis=1).astype(np.float32), clip.sample_rate)


# --- resampling --------------------------------------------------------------

def _kaiser_lowpass(up: int, down: int) -> np.ndarray:
    # 64 taps per phase; cutoff at 0.9x the lower rate's Nyquist, expressed
    # relative to the upsampled Nyquist
    max_rate = max(up, down)
    return signal.firwin(64 * max_rate + 1, 0.9 / max_rate, window=("kaiser", 12.0))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling; identity when rates already match."""
    if clip.sample_rate <= 0 or target_rate <= 0:
        raise ValueError("sample rates must be positive")
    if clip.sample_rate == target_rate:
        return clip
    g = math.gcd(clip.sample_rate, target_rate)
    up, down = target_rate // g, clip.sample_rate // g
    out = signal.resample_poly(clip.samples.astype(np.float64), up, down,
                               window=_kaiser_lowpass(up, down))
    # round-half-up target length in exact integer arithmetic
    n_out = (2 * len(clip.samples) * target_rate + clip.sample_rate) // (2 * clip.sample_rate)
    return AudioClip(out[:n_out].astype(np.float32), target_rate)


# --- silence trimming ---------------------------------------------------------

def trim_silence(clip: AudioClip, max_silence_s: float = 0.2) -> AudioClip:
    """Shorten every run of silent frames longer than `max_silence_s` to that
    length, keeping the leading part of the run.

    A 20 ms frame is silent when its RMS is 40 dB or more below the peak-frame
    RMS. The trailing partial frame (if any) never counts as silent. Raises
    EmptyAfterTrim when no full frame is above the threshold.
    """
    samples = clip.samples
    frame_len = max(1, round(clip.sample_rate * SILENCE_FRAME_S))
    n_frames = len(samples) // frame_len
    if n_frames == 0:
        return clip

    frames = samples[:n_frames * frame_len].reshape(n_frames, frame_len)
    rms = np.sqrt(np.mean(frames.astype(np.float64) ** 2, axis=1))
    threshold = rms.max() * 10.0 ** (-SILENCE_DB_BELOW_PEAK / 20.0)
    silent = rms <= threshold
    if silent.all():
        raise EmptyAfterTrim("clip contains no non-silent frame")

    max_run = int(round(max_silence_s * clip.sample_rate / frame_len))
    keep = np.ones(n_frames, dtype=bool)
    i = 0
    while i < n_frames:
        if silent[i]:
            j = i
            while j < n_frames and silent[j]:
                j += 1
            if j - i > max_run:
                keep[i + max_run:j] = False
            i = j
        else:
            i += 1

    tail = samples[n_frames * frame_len:]
    out = np.concatenate([frames[keep].reshape(-1), tail])
    return AudioClip(out.astype(np.float32), clip.sample_rate)


# --- length normalization ------------------------------------------------------

def normalize_length(clip: AudioClip, target_len: int = TARGET_LEN) -> AudioClip:
    """Truncate to `target_len`, or tile the whole clip end-to-start and truncate."""
    n = len(clip.samples)
    if n < 1:
        raise ValueError("cannot normalize an empty clip")
    if n == target_len:
        return clip
    if n > target_len:
        out = clip.samples[:target_len]
    else:
        reps = -(-target_len // n)  # ceil
        out = np.tile(clip.samples, reps)[:target_len]
    return AudioClip(np.ascontiguousarray(out, dtype=np.float32), clip.sample_rate)


def preprocess(clip: AudioClip, clip_len: int = TARGET_LEN,
               target_rate: int = TARGET_RATE) -> AudioClip:
    """Full recipe: resample -> trim silence runs -> normalize length."""
    return normalize_length(trim_silence(resample(clip, target_rate)), clip_len)
