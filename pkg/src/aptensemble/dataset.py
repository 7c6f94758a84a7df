"""Boolean process-behavior datasets: load, validate, synthesize, split.

The on-disk format is a flat CSV: "id" first, one column per boolean
feature, optional trailing "label" column (1 = APT). Filenames shaped like
Windows_E1_PE.csv carry their OS / scenario / aspect tags, which the loader
picks up for reporting.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidConfig,
    MalformedHeader,
    NonBooleanCell,
    RaggedRow,
    TooFewAPT,
)

BENIGN = 0
APT = 1

OS_NAMES = ("BSD", "Windows", "Linux", "Android")
SCENARIOS = ("E1", "E2")
ASPECTS = ("PE", "PX", "PP", "PN", "PA")

# Bit-noise applied by the synthetic generator. APTs must stay near-benign,
# so benign clusters get light noise and rare features fire only rarely.
NOISE_COMMON = 0.02
NOISE_RARE = 0.004


@dataclass
class DatasetMeta:
    os: str | None = None
    scenario: str | None = None
    aspect: str | None = None

    def __post_init__(self):
        if self.os is not None and self.os not in OS_NAMES:
            raise InvalidConfig(f"unknown OS {self.os!r}")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise InvalidConfig(f"unknown scenario {self.scenario!r}")
        if self.aspect is not None and self.aspect not in ASPECTS:
            raise InvalidConfig(f"unknown aspect {self.aspect!r}")


@dataclass
class ProcessRecord:
    id: str
    features: np.ndarray  # uint8 bit-vector of length d
    label: int | None = None  # BENIGN / APT / None


@dataclass
class BooleanDataset:
    feature_names: list[str]
    records: list[ProcessRecord]
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self):
        if len(self.feature_names) < 1:
            raise MalformedHeader("dataset needs at least one feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise MalformedHeader("duplicate feature names")
        d = len(self.feature_names)
        for rec in self.records:
            if len(rec.features) != d:
                raise RaggedRow(0, d, len(rec.features))

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def labeled(self) -> bool:
        return bool(self.records) and all(r.label is not None for r in self.records)

    @property
    def apt_count(self) -> int:
        return sum(1 for r in self.records if r.label == APT)

    def features_matrix(self) -> np.ndarray:
        """(n, d) float64 matrix, records in order."""
        return np.array([r.features for r in self.records], dtype=np.float64)

    def labels_array(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def summary(self) -> dict:
        return {
            "rows": self.n,
            "features": self.d,
            "attacks": self.apt_count if self.labeled else None,
            "os": self.meta.os,
            "scenario": self.meta.scenario,
            "aspect": self.meta.aspect,
        }


@dataclass
class SynthConfig:
    """Desk-scale surrogate for the imbalanced process-aspect corpora."""

    n_records: int = 2000
    d: int = 64
    apt_rate: float = 0.02
    benign_pattern_count: int = 5
    apt_flip_count: int = 8
    seed: int = 1

    def __post_init__(self):
        if self.n_records < 1 or self.d < 1:
            raise InvalidConfig("n_records and d must be >= 1")
        if not 0.0 < self.apt_rate < 1.0:
            raise InvalidConfig(f"apt_rate must be in (0,1), got {self.apt_rate}")
        if self.apt_rate * self.n_records < 1:
            raise InvalidConfig("apt_rate * n_records must be >= 1")
        if self.apt_flip_count > self.d:
            raise InvalidConfig("apt_flip_count cannot exceed d")
        if self.benign_pattern_count < 1:
            raise InvalidConfig("benign_pattern_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "d": self.d,
            "apt_rate": self.apt_rate,
            "benign_pattern_count": self.benign_pattern_count,
            "apt_flip_count": self.apt_flip_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


# -- loading / writing --------------------------------------------------------

_NAME_RE = re.compile(r"^(BSD|Windows|Linux|Android)_(E[12])_(PE|PX|PP|PN|PA)$")


def _meta_from_filename(path: Path) -> DatasetMeta:
    m = _NAME_RE.match(path.stem)
    if m:
        return DatasetMeta(os=m.group(1), scenario=m.group(2), aspect=m.group(3))
    return DatasetMeta()


def load_csv(path: str | Path) -> BooleanDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeader(f"{path}: empty file") from None
        if not header or header[0] != "id":
            raise MalformedHeader(f"{path}: first column must be 'id'")
        has_label = len(header) > 1 and header[-1] == "label"
        feature_names = header[1:-1] if has_label else header[1:]
        if not feature_names:
            raise MalformedHeader(f"{path}: no feature columns")
        if len(set(feature_names)) != len(feature_names):
            raise MalformedHeader(f"{path}: duplicate feature names")
        width = len(header)
        records = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != width:
                raise RaggedRow(row_no, width, len(row))
            bits = np.empty(len(feature_names), dtype=np.uint8)
            for col, cell in enumerate(row[1 : 1 + len(feature_names)]):
                if cell == "0":
                    bits[col] = 0
                elif cell == "1":
                    bits[col] = 1
                else:
                    raise NonBooleanCell(row_no, col + 1, cell)
            label = None
            if has_label:
                cell = row[-1]
                if cell == "0":
                    label = BENIGN
                elif cell == "1":
                    label = APT
                else:
                    raise NonBooleanCell(row_no, width - 1, cell)
            records.append(ProcessRecord(row[0], bits, label))
    if not records:
        raise EmptyDataset(f"{path}: no data rows")
    return BooleanDataset(feature_names, records, _meta_from_filename(path))


def write_csv(ds: BooleanDataset, path: str | Path) -> None:
    """Canonical form: id first, label last when present, '\\n' line endings."""
    path = Path(path)
    labeled = ds.labeled
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["id", *ds.feature_names] + (["label"] if labeled else [])
        writer.writerow(header)
        for rec in ds.records:
            row = [rec.id, *(str(int(b)) for b in rec.features)]
            if labeled:
                row.append(str(rec.label))
            writer.writerow(row)


# -- synthesis ----------------------------------------------------------------

def _rare_pool(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    rare_count = min(cfg.d, max(cfg.apt_flip_count, cfg.d // 4))
    return np.sort(rng.choice(cfg.d, size=rare_count, replace=False))


def benign_templates(cfg: SynthConfig) -> np.ndarray:
    """The benign cluster centers the generator draws from.

    Exposed so tests can recompute record-to-template distances.
    """
    rng = np.random.default_rng(cfg.seed)
    rare = _rare_pool(cfg, rng)
    templates = (rng.uniform(size=(cfg.benign_pattern_count, cfg.d)) < 0.35).astype(np.uint8)
    templates[:, rare] = 0
    return templates


def synth_generate(cfg: SynthConfig) -> BooleanDataset:
    """Deterministic synthetic aspect dataset.

    Benign rows are noisy copies of template clusters; APT rows are the
    same near-benign rows with apt_flip_count rare feature bits forced on.
    """
    rng = np.random.default_rng(cfg.seed)
    rare = _rare_pool(cfg, rng)
    templates = (rng.uniform(size=(cfg.benign_pattern_count, cfg.d)) < 0.35).astype(np.uint8)
    templates[:, rare] = 0

    n_apt = int(round(cfg.apt_rate * cfg.n_records))
    labels = np.zeros(cfg.n_records, dtype=np.int64)
    labels[rng.permutation(cfg.n_records)[:n_apt]] = APT

    rare_mask = np.zeros(cfg.d, dtype=bool)
    rare_mask[rare] = True

    records = []
    for i in range(cfg.n_records):
        template = templates[rng.integers(cfg.benign_pattern_count)]
        bits = template.copy()
        flip_common = rng.uniform(size=cfg.d) < NOISE_COMMON
        flip_common &= ~rare_mask
        bits[flip_common] ^= 1
        fire_rare = rng.uniform(size=cfg.d) < NOISE_RARE
        fire_rare &= rare_mask
        bits[fire_rare] = 1
        if labels[i] == APT:
            quiet_rare = rare[bits[rare] == 0]
            chosen = rng.choice(quiet_rare, size=min(cfg.apt_flip_count, len(quiet_rare)), replace=False)
            bits[chosen] = 1
        records.append(ProcessRecord(f"proc-{i:06d}", bits, int(labels[i])))

    names = [f"attr_{j:03d}" for j in range(cfg.d)]
    return BooleanDataset(names, records)


# -- splitting ------------------------------------------------------------------

def split(ds: BooleanDataset, train_fraction: float, seed: int) -> tuple[BooleanDataset, BooleanDataset]:
    """Label-stratified split; record order inside each part follows the input."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfig(f"train_fraction must be in (0,1), got {train_fraction}")
    if not ds.labeled:
        raise InvalidConfig("split requires a labeled dataset")
    apt_idx = [i for i, r in enumerate(ds.records) if r.label == APT]
    benign_idx = [i for i, r in enumerate(ds.records) if r.label == BENIGN]
    if len(apt_idx) < 2:
        raise TooFewAPT(f"need at least 2 APT records to stratify, have {len(apt_idx)}")

    rng = np.random.default_rng(seed)

    def take(indices: list[int], count: int) -> set[int]:
        picked = rng.permutation(len(indices))[:count]
        return {indices[i] for i in picked}

    # round to exact stratification, then keep at least one record of each
    # class on each side so downstream evaluation stays well-posed
    n_apt_train = int(round(train_fraction * len(apt_idx)))
    n_apt_train = min(max(n_apt_train, 1), len(apt_idx) - 1)
    n_benign_train = int(round(train_fraction * len(benign_idx)))
    if len(benign_idx) >= 2:
        n_benign_train = min(max(n_benign_train, 1), len(benign_idx) - 1)

    train_set = take(apt_idx, n_apt_train) | take(benign_idx, n_benign_train)
    train_recs = [r for i, r in enumerate(ds.records) if i in train_set]
    test_recs = [r for i, r in enumerate(ds.records) if i not in train_set]
    return (
        BooleanDataset(ds.feature_names, train_recs, ds.meta),
        BooleanDataset(ds.feature_names, test_recs, ds.meta),
    )
