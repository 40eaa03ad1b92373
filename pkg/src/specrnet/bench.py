"""CPU inference latency benchmark.

Protocol: per batch size, one seeded random feature batch (B, 1, 80, 402),
10 warm-up forwards, then `iterations` timed forwards in eval mode; mean and
standard deviation are reported in milliseconds. Optionally the LFCC
front-end is timed separately on random waveform batches. Only the forward
call sits inside the timed region.
"""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import audio
from .lfcc import LfccConfig, lfcc
from .model import SpecRNet
from .nn.backend import active_backend, available_backends, set_backend

DEFAULT_BATCH_SIZES = (1, 16, 32)
DEFAULT_ITERATIONS = 1000
WARMUP_ITERATIONS = 10
FEATURE_FRAMES = 402  # frames produced by a standard 64600-sample clip


@dataclass
class BenchRow:
    batch_size: int
    iterations: int
    mean_ms: float
    std_ms: float
    lfcc_mean_ms: float | None = None


@dataclass
class BenchReport:
    device: str
    rows: list[BenchRow] = field(default_factory=list)

    def rows_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=2)


def device_label() -> str:
    return f"cpu ({platform.machine()}, {os.cpu_count()} cores, " \
           f"backend={active_backend()})"


def _time_loop(fn, iterations: int) -> tuple[float, float]:
    for _ in range(WARMUP_ITERATIONS):
        fn()
    samples = np.empty(iterations, dtype=np.float64)
    for i in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples[i] = time.perf_counter() - t0
    return float(samples.mean() * 1e3), float(samples.std() * 1e3)


def bench_inference(model: SpecRNet, batch_sizes=DEFAULT_BATCH_SIZES,
                    iterations: int = DEFAULT_ITERATIONS,
                    measure_lfcc: bool = False, seed: int = 0,
                    n_frames: int = FEATURE_FRAMES) -> BenchReport:
    """Time eval-mode forwards per batch size; weights and running statistics
    are left untouched."""
    rng = np.random.default_rng(seed)
    cfg = LfccConfig()
    report = BenchReport(device=device_label())
    for bs in batch_sizes:
        x = rng.standard_normal(
            (bs, 1, model.cfg.input_coeffs, n_frames)).astype(np.float32)
        mean_ms, std_ms = _time_loop(lambda: model.forward(x, train=False), iterations)
        row = BenchRow(batch_size=bs, iterations=iterations,
                       mean_ms=mean_ms, std_ms=std_ms)
        if measure_lfcc:
            waves = rng.standard_normal((bs, audio.TARGET_LEN)).astype(np.float32)

            def extract():
                for wave in waves:
                    lfcc(wave, cfg)

            row.lfcc_mean_ms, _ = _time_loop(extract, iterations)
        report.rows.append(row)
    return report


def compare_backends(model_builder, batch_sizes=DEFAULT_BATCH_SIZES,
                     iterations: int = 50, seed: int = 0) -> dict:
    """Run the timing protocol under every available backend and check that
    the backends agree numerically on a fixed batch.

    `model_builder` is a zero-argument callable returning a fresh model, so
    each backend scores identical weights.
    """
    previous = active_backend()
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal((4, 1, 80, FEATURE_FRAMES)).astype(np.float32)
    results: dict = {"iterations": iterations, "backends": {}}
    scores: dict[str, np.ndarray] = {}
    try:
        for name in available_backends():
            set_backend(name)
            model = model_builder()
            report = bench_inference(model, batch_sizes, iterations, seed=seed)
            results["backends"][name] = [asdict(r) for r in report.rows]
            scores[name] = model.forward(probe, train=False)
    finally:
        set_backend(previous)
    if len(scores) == 2:
        a, b = scores.values()
        results["max_score_disagreement"] = float(np.max(np.abs(a - b)))
    return results
