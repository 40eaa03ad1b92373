"""Dataset manifests: discovery, stratified splitting, class balancing, CSV IO.

A manifest row is (path, label, attack, split). Label 0 is bona fide,
label 1 is fake; the attack tag names the generation method ("bonafide"
for pristine audio). Splits follow the 70:15:15 train/test/eval layout.
"""

from __future__ import annotations

import csv
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import MissingClass, NoBonafideDir

log = logging.getLogger(__name__)

LABEL_BONAFIDE = 0
LABEL_FAKE = 1
BONAFIDE_TAG = "bonafide"
SPLITS = ("train", "test", "eval")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int
    attack: str
    split: str = "unset"


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    seed: int | None = None

    def by_split(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def attacks(self) -> list[str]:
        """Distinct non-bonafide attack tags, sorted."""
        return sorted({r.attack for r in self.records if r.attack != BONAFIDE_TAG})

    def without_attacks(self, excluded) -> "DatasetManifest":
        excluded = set(excluded)
        kept = [r for r in self.records if r.attack not in excluded]
        return DatasetManifest(kept, self.seed)

    def validate(self) -> None:
        for r in self.records:
            if (r.label == LABEL_BONAFIDE) != (r.attack == BONAFIDE_TAG):
                raise ValueError(f"label/attack mismatch for {r.path}")
            if not os.path.exists(r.path):
                raise FileNotFoundError(f"manifest entry missing on disk: {r.path}")


def build_manifest(root, attack_layout: dict[str, str]) -> DatasetManifest:
    """One record per WAV file under each mapped subdirectory of `root`.

    `attack_layout` maps directory names to attack tags; exactly one directory
    must map to "bonafide". Empty directories are logged and skipped.
    """
    root = Path(root)
    if BONAFIDE_TAG not in attack_layout.values():
        raise NoBonafideDir("attack layout maps no directory to 'bonafide'")
    records = []
    for dirname in sorted(attack_layout):
        attack = attack_layout[dirname]
        label = LABEL_BONAFIDE if attack == BONAFIDE_TAG else LABEL_FAKE
        wavs = sorted((root / dirname).glob("*.wav"))
        if not wavs:
            log.warning("attack directory %s contains no WAV files", root / dirname)
            continue
        records.extend(ManifestRecord(str(p), label, attack) for p in wavs)
    return DatasetManifest(records)


def allocate_counts(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of `n` items over `ratios`.

    Ties on the fractional part go to the earlier position, so a 10-record
    stratum at 70:15:15 lands on (7, 2, 1).
    """
    raw = [n * r for r in ratios]
    base = [int(np.floor(x + 1e-9)) for x in raw]
    remainder = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


def split_manifest(manifest: DatasetManifest, ratios=DEFAULT_RATIOS,
                   seed: int = 0) -> DatasetManifest:
    """Assign train/test/eval stratified per (label, attack), deterministically."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    strata: dict[tuple[int, str], list[int]] = {}
    for idx, rec in enumerate(manifest.records):
        strata.setdefault((rec.label, rec.attack), []).append(idx)

    assigned = list(manifest.records)
    for key in sorted(strata):
        idxs = sorted(strata[key], key=lambda i: manifest.records[i].path)
        perm = rng.permutation(len(idxs))
        counts = allocate_counts(len(idxs), ratios)
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for k in perm[cursor:cursor + count]:
                i = idxs[int(k)]
                assigned[i] = replace(manifest.records[i], split=split)
            cursor += count
    return DatasetManifest(assigned, seed)


def oversample_balance(manifest: DatasetManifest, split: str,
                       seed: int = 0) -> DatasetManifest:
    """Duplicate minority-class records (with replacement) until the classes
    in `split` are equal in size. Originals are always retained."""
    positions = [i for i, r in enumerate(manifest.records) if r.split == split]
    bona = [i for i in positions if manifest.records[i].label == LABEL_BONAFIDE]
    fake = [i for i in positions if manifest.records[i].label == LABEL_FAKE]
    if not bona or not fake:
        raise MissingClass(f"split {split!r} lacks one of the classes "
                           f"({len(bona)} bonafide, {len(fake)} fake)")
    deficit = abs(len(fake) - len(bona))
    if deficit == 0:
        return DatasetManifest(list(manifest.records), manifest.seed)
    minority = bona if len(bona) < len(fake) else fake
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.asarray(minority), size=deficit, replace=True)
    out = list(manifest.records)
    out.extend(manifest.records[int(i)] for i in picks)
    return DatasetManifest(out, manifest.seed)


# --- CSV interchange --------------------------------------------------------

_LABEL_NAMES = {LABEL_BONAFIDE: "bonafide", LABEL_FAKE: "fake"}
_LABEL_VALUES = {v: k for k, v in _LABEL_NAMES.items()}


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Write `path,label,attack,split` CSV atomically."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".manifest-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "label", "attack", "split"])
            for r in manifest.records:
                writer.writerow([r.path, _LABEL_NAMES[r.label], r.attack, r.split])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest(path) -> DatasetManifest:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row["label"] not in _LABEL_VALUES:
                raise ValueError(f"{path}: unknown label {row['label']!r}")
            records.append(ManifestRecord(row["path"], _LABEL_VALUES[row["label"]],
                                          row["attack"], row["split"]))
    return DatasetManifest(records)
