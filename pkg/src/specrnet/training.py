"""Training and evaluation harness.

Feature extraction (preprocess + LFCC) is cached on first touch, keyed by
file content hash, front-end config and clip length, so repeated epochs and
runs are fast while staying bit-transparent. Checkpoints are written per
epoch; the one with the lowest test-split EER wins (ties go to the earlier
epoch).
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio
from .container import read_container, write_container
from .errors import EmptySplit
from .lfcc import LfccConfig, lfcc
from .manifest import DatasetManifest, ManifestRecord, allocate_counts
from .metrics import EvalReport, evaluate_scores
from .model import SpecRNet, build, load_weights, save_weights
from .nn.loss import bce_loss
from .nn.optim import Adam

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "SPECRNET_CACHE_DIR"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 128
    epochs: int = 10
    weight_decay: float = 1e-4
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    clip_len: int = audio.TARGET_LEN
    train_fraction: float = 1.0
    excluded_attacks: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ValueError("train_fraction must be in (0, 1]")
        object.__setattr__(self, "excluded_attacks", frozenset(self.excluded_attacks))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    test_eer: float
    test_auc: float
    checkpoint_path: str


@dataclass
class TrainResult:
    best_checkpoint: str
    best_epoch: int
    log: list[EpochLog]
    log_csv: str
    attacks_seen: list[str] = field(default_factory=list)
    n_train_records: int = 0
    n_test_records: int = 0


# --- feature cache --------------------------------------------------------------


def resolve_cache_dir(checkpoint_dir: str | None = None) -> Path:
    env = os.environ.get(CACHE_ENV_VAR, "").strip()
    if env:
        return Path(env)
    base = Path(checkpoint_dir) if checkpoint_dir else Path(".")
    return base / "lfcc_cache"


def _cache_key(wav_bytes: bytes, cfg: LfccConfig, clip_len: int) -> str:
    h = hashlib.sha256()
    h.update(wav_bytes)
    h.update(repr((cfg, clip_len)).encode())
    return h.hexdigest()


def extract_features(path, clip_len: int = audio.TARGET_LEN,
                     cfg: LfccConfig = LfccConfig(),
                     cache_dir: Path | None = None) -> np.ndarray:
    """Preprocess one WAV file and return its (1, n_lfcc, N) feature map."""
    with open(path, "rb") as fh:
        wav_bytes = fh.read()
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = cache_dir / (_cache_key(wav_bytes, cfg, clip_len) + ".srnw")
        if cache_path.exists():
            return read_container(cache_path)["lfcc"]
    clip = audio.load_wav(path)
    features = lfcc(audio.preprocess(clip, clip_len).samples, cfg)
    if cache_dir is not None:
        write_container(cache_path, {"lfcc": features})
    return features


# --- deterministic subsampling -----------------------------------------------------


def subsample_records(records: list[ManifestRecord], fraction: float,
                      rng: np.random.Generator) -> list[ManifestRecord]:
    """Keep round(n * fraction) records, allocated over (label, attack) strata
    by largest remainder; selection within a stratum is a seeded draw."""
    if fraction >= 1.0:
        return list(records)
    strata: dict[tuple[int, str], list[int]] = {}
    for i, rec in enumerate(records):
        strata.setdefault((rec.label, rec.attack), []).append(i)
    target = int(round(len(records) * fraction))
    keys = sorted(strata)
    sizes = [len(strata[k]) for k in keys]
    ratios = [s / len(records) for s in sizes]
    quota = allocate_counts(target, ratios)
    keep: list[int] = []
    for k, q, size in zip(keys, quota, sizes):
        perm = rng.permutation(size)[:min(q, size)]
        keep.extend(strata[k][int(i)] for i in perm)
    return [records[i] for i in sorted(keep)]


# --- batched scoring ----------------------------------------------------------------


def _score_records(model: SpecRNet, records: list[ManifestRecord], clip_len: int,
                   lfcc_cfg: LfccConfig, cache_dir: Path | None,
                   batch_size: int = 32) -> np.ndarray:
    scores = np.zeros(len(records), dtype=np.float64)
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        feats = np.concatenate(
            [extract_features(r.path, clip_len, lfcc_cfg, cache_dir)[None]
             for r in chunk], axis=0)
        scores[start:start + len(chunk)] = model.forward(feats, train=False)
    return scores


def evaluate(checkpoint, manifest: DatasetManifest, split: str = "eval",
             clip_len: int = audio.TARGET_LEN,
             lfcc_cfg: LfccConfig = LfccConfig(),
             cache_dir: Path | None = None) -> EvalReport:
    """Score every record in `split` with a checkpointed model (path or
    in-memory SpecRNet) and report EER/AUC."""
    model = checkpoint if isinstance(checkpoint, SpecRNet) else load_weights(checkpoint)
    records = manifest.by_split(split)
    if not records:
        raise EmptySplit(f"split {split!r} is empty")
    scores = _score_records(model, records, clip_len, lfcc_cfg, cache_dir)
    labels = np.array([r.label for r in records])
    return evaluate_scores(scores, labels)


# --- training loop --------------------------------------------------------------------


def train(manifest: DatasetManifest, cfg: TrainConfig,
          lfcc_cfg: LfccConfig = LfccConfig()) -> TrainResult:
    """One full training run: seeded shuffling, BCE + Adam updates, per-epoch
    validation EER on the test split, best-checkpoint selection."""
    work = manifest.without_attacks(cfg.excluded_attacks)
    rng_sub = np.random.default_rng([cfg.seed, 2])
    train_records = subsample_records(work.by_split("train"), cfg.train_fraction, rng_sub)
    test_records = subsample_records(work.by_split("test"), cfg.train_fraction, rng_sub)
    if not train_records:
        raise EmptySplit("train split is empty after filtering")
    if not test_records:
        raise EmptySplit("test split is empty after filtering")

    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = resolve_cache_dir(cfg.checkpoint_dir)

    log.info("training on %d records, validating on %d (excluded attacks: %s)",
             len(train_records), len(test_records),
             sorted(cfg.excluded_attacks) or "none")

    features = np.concatenate(
        [extract_features(r.path, cfg.clip_len, lfcc_cfg, cache_dir)[None]
         for r in train_records], axis=0)
    labels = np.array([r.label for r in train_records], dtype=np.float32)
    attacks = np.array([r.attack for r in train_records])

    model = build(seed=cfg.seed)
    optimizer = Adam(model.trainable_parameters(), lr=cfg.lr,
                     weight_decay=cfg.weight_decay)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])

    epoch_logs: list[EpochLog] = []
    attacks_seen: set[str] = set()
    best = None  # (eer, epoch, path)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_records))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            batch_attacks = set(attacks[batch])
            assert not (batch_attacks & cfg.excluded_attacks), \
                f"excluded attack leaked into a batch: {batch_attacks}"
            attacks_seen.update(batch_attacks)
            scores = model.forward(features[batch], train=True)
            loss, dscore = bce_loss(scores, labels[batch])
            optimizer.zero_grad()
            model.backward(dscore)
            optimizer.step()
            losses.append(loss)

        report = _eval_records(model, test_records, cfg, lfcc_cfg, cache_dir)
        ckpt_path = str(ckpt_dir / f"epoch_{epoch:02d}.srnw")
        save_weights(model, ckpt_path)
        epoch_logs.append(EpochLog(epoch, float(np.mean(losses)),
                                   report.eer_percent, report.auc_percent, ckpt_path))
        log.info("epoch %d: loss %.4f, test EER %.4f%%, AUC %.4f%%",
                 epoch, epoch_logs[-1].train_loss, report.eer_percent,
                 report.auc_percent)
        if best is None or report.eer_percent < best[0]:
            best = (report.eer_percent, epoch, ckpt_path)

    log_csv = str(ckpt_dir / "train_log.csv")
    _write_log(epoch_logs, log_csv)
    return TrainResult(best_checkpoint=best[2], best_epoch=best[1],
                       log=epoch_logs, log_csv=log_csv,
                       attacks_seen=sorted(attacks_seen),
                       n_train_records=len(train_records),
                       n_test_records=len(test_records))


def _eval_records(model, records, cfg, lfcc_cfg, cache_dir) -> EvalReport:
    scores = _score_records(model, records, cfg.clip_len, lfcc_cfg, cache_dir)
    labels = np.array([r.label for r in records])
    return evaluate_scores(scores, labels)


def _write_log(rows: list[EpochLog], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "test_eer", "test_auc",
                         "checkpoint_path"])
        for r in rows:
            writer.writerow([r.epoch, f"{r.train_loss:.6f}", f"{r.test_eer:.6f}",
                             f"{r.test_auc:.6f}", r.checkpoint_path])


def config_from_dict(data: dict) -> TrainConfig:
    known = {f: data[f] for f in TrainConfig.__dataclass_fields__ if f in data}
    unknown = set(data) - set(TrainConfig.__dataclass_fields__) - {"protocol", "seeds"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "excluded_attacks" in known:
        known["excluded_attacks"] = frozenset(known["excluded_attacks"])
    return TrainConfig(**known)
