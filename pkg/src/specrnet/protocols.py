"""Benchmark protocols: full, limited_attacks, short_utterances, data_scarcity.

Every protocol trains once per seed (limited_attacks: once per attack per
seed), evaluates on the eval split, and aggregates mean and population
standard deviation of EER/AUC across seeds.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .errors import UnknownProtocol
from .lfcc import LfccConfig
from .manifest import DatasetManifest
from .training import TrainConfig, evaluate, resolve_cache_dir, train

log = logging.getLogger(__name__)

PROTOCOLS = ("full", "limited_attacks", "short_utterances", "data_scarcity")

SHORT_UTTERANCE_LEN = 16000  # 1 s at 16 kHz
SCARCITY_FRACTION = 0.1
SCARCITY_EPOCHS = 4


def protocol_config(name: str, base: TrainConfig, **overrides) -> TrainConfig:
    """Apply a protocol's setting changes on top of a base configuration."""
    if name == "full":
        cfg = base
    elif name == "short_utterances":
        cfg = replace(base, clip_len=SHORT_UTTERANCE_LEN)
    elif name == "data_scarcity":
        cfg = replace(base, train_fraction=SCARCITY_FRACTION, epochs=SCARCITY_EPOCHS)
    elif name == "limited_attacks":
        cfg = base  # per-attack exclusion is applied per run
    else:
        raise UnknownProtocol(f"unknown protocol {name!r}; choose from {PROTOCOLS}")
    return replace(cfg, **overrides) if overrides else cfg


def _aggregate(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def _single_run(manifest: DatasetManifest, cfg: TrainConfig,
                lfcc_cfg: LfccConfig) -> dict:
    result = train(manifest, cfg, lfcc_cfg)
    report = evaluate(result.best_checkpoint, manifest, "eval",
                      clip_len=cfg.clip_len, lfcc_cfg=lfcc_cfg,
                      cache_dir=resolve_cache_dir(cfg.checkpoint_dir))
    return {
        "seed": cfg.seed,
        "config": _config_summary(cfg),
        "best_checkpoint": result.best_checkpoint,
        "best_epoch": result.best_epoch,
        "attacks_seen": result.attacks_seen,
        "n_train_records": result.n_train_records,
        "n_test_records": result.n_test_records,
        "eval": {
            "eer_percent": report.eer_percent,
            "auc_percent": report.auc_percent,
            "eer_threshold": report.eer_threshold,
            "n_bonafide": report.n_bonafide,
            "n_fake": report.n_fake,
        },
    }


def _config_summary(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["excluded_attacks"] = sorted(cfg.excluded_attacks)
    return d


def run_protocol(name: str, manifest: DatasetManifest, base_cfg: TrainConfig,
                 seeds: list[int], lfcc_cfg: LfccConfig = LfccConfig()) -> dict:
    """Run one named protocol across `seeds` and aggregate the eval metrics."""
    if name not in PROTOCOLS:
        raise UnknownProtocol(f"unknown protocol {name!r}; choose from {PROTOCOLS}")
    base_dir = Path(base_cfg.checkpoint_dir)
    report: dict = {"protocol": name, "seeds": list(seeds), "runs": []}

    if name == "limited_attacks":
        per_attack: dict[str, dict] = {}
        for attack in manifest.attacks():
            reduced = manifest.without_attacks({attack})
            runs = []
            for seed in seeds:
                cfg = protocol_config(
                    name, base_cfg, seed=seed,
                    excluded_attacks=frozenset({attack}),
                    checkpoint_dir=str(base_dir / f"omit_{attack}" / f"seed_{seed}"))
                log.info("limited_attacks: omitting %s, seed %d", attack, seed)
                runs.append(_single_run(reduced, cfg, lfcc_cfg))
            per_attack[attack] = {
                "runs": runs,
                "eer": _aggregate([r["eval"]["eer_percent"] for r in runs]),
                "auc": _aggregate([r["eval"]["auc_percent"] for r in runs]),
            }
            report["runs"].extend(runs)
        report["per_attack"] = per_attack
        return report

    for seed in seeds:
        cfg = protocol_config(name, base_cfg, seed=seed,
                              checkpoint_dir=str(base_dir / f"seed_{seed}"))
        log.info("protocol %s: seed %d", name, seed)
        report["runs"].append(_single_run(manifest, cfg, lfcc_cfg))
    report["aggregate"] = {
        "eer": _aggregate([r["eval"]["eer_percent"] for r in report["runs"]]),
        "auc": _aggregate([r["eval"]["auc_percent"] for r in report["runs"]]),
    }
    return report
