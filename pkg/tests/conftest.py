import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable


def write_wav_pcm16(path, samples, rate):
    """Minimal PCM16 WAV writer (independent of the package reader)."""
    pcm = np.asarray(samples)
    if pcm.dtype.kind == "f":
        pcm = np.clip(np.round(pcm * 32768.0), -32768, 32767)
    data = pcm.astype("<i2").tobytes()
    channels = 1 if np.ndim(samples) == 1 else np.shape(samples)[1]
    _write_riff(path, data, rate, channels, fmt_tag=1, bits=16)


def write_wav_float32(path, samples, rate):
    samples = np.asarray(samples, dtype="<f4")
    channels = 1 if samples.ndim == 1 else samples.shape[1]
    _write_riff(path, samples.tobytes(), rate, channels, fmt_tag=3, bits=32)


def _write_riff(path, data, rate, channels, fmt_tag, bits):
    block = channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, fmt_tag, channels, rate,
                                    rate * block, block, bits)
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)


def sine_wave(freq, seconds, rate=16000, amp=0.6, phase=0.0):
    t = np.arange(int(seconds * rate)) / rate
    return (amp * np.sin(2 * np.pi * freq * t + phase)).astype(np.float32)


@pytest.fixture
def synthetic_dataset(tmp_path):
    """Factory for tiny separable WAV datasets: sines are bona fide, shaped
    noise per attack tag is fake."""

    def make(attacks=("melgan",), n_bonafide=8, n_per_attack=8,
             seconds=0.8, rate=16000, seed=42):
        rng = np.random.default_rng(seed)
        root = tmp_path / "corpus"
        layout = {"ljspeech": "bonafide"}
        bona_dir = root / "ljspeech"
        bona_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n_bonafide):
            wave = sine_wave(300 + 13 * i, seconds, rate,
                             phase=rng.uniform(0, 2 * np.pi))
            write_wav_float32(bona_dir / f"bona_{i:03d}.wav", wave, rate)
        n = int(seconds * rate)
        for a, attack in enumerate(attacks):
            layout[attack] = attack
            d = root / attack
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n_per_attack):
                wave = 0.3 * rng.standard_normal(n)
                # mild per-attack coloration so tags are distinguishable
                wave += 0.05 * np.sin(2 * np.pi * (1000 + 200 * a)
                                      * np.arange(n) / rate)
                write_wav_float32(d / f"{attack}_{i:03d}.wav",
                                  wave.astype(np.float32), rate)
        return root, layout

    return make


@pytest.fixture(autouse=True)
def isolated_cache_env(monkeypatch, tmp_path):
    """Keep the feature cache inside each test's tmp dir."""
    monkeypatch.setenv("SPECRNET_CACHE_DIR", str(tmp_path / "shared_lfcc_cache"))
