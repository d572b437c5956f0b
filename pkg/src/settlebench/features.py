"""Map-cluster feature vectors, city labels, and dataset construction.

A cluster is encoded positionlessly: center terrain/special one-hots,
counts of terrain and special kinds over the 20 surrounding tiles, water
flags, whale count, and neighbouring-city counts in the two-tile band
outside the cluster. 60 columns total.

Labels are the city's accumulated weighted output over its first 100
turns of existence (later turns of short episodes simply contribute
nothing). Duplicate feature rows are merged by averaging their labels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .engine import EpisodeLog
from .world import (
    BUILDABLE_TERRAINS,
    GameMap,
    SpecialKind,
    TerrainKind,
    cluster_at,
)

LABEL_HORIZON = 100
NEIGHBOR_BAND = (3, 4)  # Chebyshev distances just outside the cluster radius of 2

SPECIAL_ORDER = tuple(SpecialKind)
TERRAIN_ORDER = tuple(TerrainKind)
_SPECIAL_INDEX = {s: i for i, s in enumerate(SPECIAL_ORDER)}
_TERRAIN_INDEX = {t: i for i, t in enumerate(TERRAIN_ORDER)}
_BUILDABLE_INDEX = {t: i for i, t in enumerate(BUILDABLE_TERRAINS)}


@dataclass(frozen=True)
class FeatureLayout:
    version: int = 1

    @property
    def columns(self) -> tuple[str, ...]:
        cols = [f"center_terrain_{t.value}" for t in BUILDABLE_TERRAINS]
        cols += [f"around_terrain_{t.value}" for t in TERRAIN_ORDER]
        cols += [f"center_special_{s.value}" for s in SPECIAL_ORDER]
        cols += [f"around_special_{s.value}" for s in SPECIAL_ORDER]
        cols += ["center_river", "ocean_access", "deep_ocean_access", "whale_count", "my_neighb", "enemy_neighb"]
        return tuple(cols)

    @property
    def dim(self) -> int:
        return len(self.columns)


LAYOUT = FeatureLayout()
assert LAYOUT.dim == 60


def extract_features(game_map: GameMap, center: tuple[int, int], player: int) -> np.ndarray:
    """60-dim feature vector for the cluster at `center`, from `player`'s side."""
    cluster = cluster_at(game_map, center)
    vec = np.zeros(LAYOUT.dim, dtype=float)
    i = 0

    center_tile = cluster.center_tile
    if center_tile.terrain.buildable:
        vec[i + _BUILDABLE_INDEX[center_tile.terrain]] = 1.0
    i += len(BUILDABLE_TERRAINS)

    for tile in cluster.surrounding():
        vec[i + _TERRAIN_INDEX[tile.terrain]] += 1.0
    i += len(TERRAIN_ORDER)

    if center_tile.special is not None:
        vec[i + _SPECIAL_INDEX[center_tile.special]] = 1.0
    i += len(SPECIAL_ORDER)

    for tile in cluster.surrounding():
        if tile.special is not None:
            vec[i + _SPECIAL_INDEX[tile.special]] += 1.0
    i += len(SPECIAL_ORDER)

    vec[i] = 1.0 if center_tile.river else 0.0
    vec[i + 1] = 1.0 if any(t.terrain is TerrainKind.OCEAN for t in cluster.tiles) else 0.0
    vec[i + 2] = 1.0 if any(t.terrain is TerrainKind.DEEP_OCEAN for t in cluster.tiles) else 0.0
    vec[i + 3] = sum(1 for t in cluster.tiles if t.special is SpecialKind.WHALES)

    mine, enemy = _neighbor_city_counts(game_map, center, player)
    vec[i + 4] = mine
    vec[i + 5] = enemy
    return vec


def _neighbor_city_counts(game_map: GameMap, center: tuple[int, int], player: int) -> tuple[int, int]:
    """City centers in the 2-tile-wide band behind the cluster border."""
    cx, cy = center
    mine = enemy = 0
    lo, hi = NEIGHBOR_BAND
    for (x, y), owner in game_map.city_seats.items():
        d = max(abs(x - cx), abs(y - cy))
        if lo <= d <= hi:
            if owner == player:
                mine += 1
            else:
                enemy += 1
    return mine, enemy


@dataclass(frozen=True)
class DatasetEntry:
    features: tuple[float, ...]
    label: float


@dataclass
class MinMaxNormalization:
    feature_min: np.ndarray
    feature_max: np.ndarray
    label_min: float
    label_max: float

    def to_dict(self) -> dict:
        return {
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "label_min": self.label_min,
            "label_max": self.label_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxNormalization":
        return cls(
            feature_min=np.asarray(d["feature_min"], dtype=float),
            feature_max=np.asarray(d["feature_max"], dtype=float),
            label_min=float(d["label_min"]),
            label_max=float(d["label_max"]),
        )


@dataclass
class Dataset:
    entries: list[DatasetEntry] = field(default_factory=list)
    layout: FeatureLayout = LAYOUT
    normalization: MinMaxNormalization | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def feature_matrix(self) -> np.ndarray:
        return np.asarray([e.features for e in self.entries], dtype=float)

    def labels(self) -> np.ndarray:
        return np.asarray([e.label for e in self.entries], dtype=float)


def city_label(log: EpisodeLog, city_id: int) -> float:
    """Weighted output over the city's first LABEL_HORIZON turns of existence."""
    points = log.city_points(city_id)
    if not points:
        if city_id not in log.city_ids():
            raise KeyError(f"city {city_id} not in log")
        return 0.0
    return float(sum(p.weighted_total() for p in points[:LABEL_HORIZON]))


def build_dataset(logs: list[EpisodeLog]) -> Dataset:
    """One entry per distinct feature row; duplicate rows average their labels."""
    groups: dict[tuple[float, ...], list[float]] = {}
    for log in logs:
        for f in log.foundings():
            if f.player != log.player:
                continue
            if f.features is None:
                raise ValueError(
                    f"founding of city {f.city_id} at turn {f.turn} carries no feature vector"
                )
            key = tuple(float(v) for v in f.features)
            groups.setdefault(key, []).append(city_label(log, f.city_id))
    entries = [
        DatasetEntry(features=key, label=sum(labels) / len(labels))
        for key, labels in sorted(groups.items())
    ]
    return Dataset(entries=entries)


def minmax_fit(dataset: Dataset) -> MinMaxNormalization:
    if not dataset.entries:
        raise ValueError("cannot fit normalization on an empty dataset")
    x = dataset.feature_matrix()
    y = dataset.labels()
    return MinMaxNormalization(
        feature_min=x.min(axis=0),
        feature_max=x.max(axis=0),
        label_min=float(y.min()),
        label_max=float(y.max()),
    )


def minmax_apply(norm: MinMaxNormalization, vector: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min) per column; constant columns map to 0.

    Values outside the fitted range extrapolate (no clamping).
    """
    vector = np.asarray(vector, dtype=float)
    span = norm.feature_max - norm.feature_min
    out = np.zeros_like(vector, dtype=float)
    nz = span != 0
    out[..., nz] = (vector[..., nz] - norm.feature_min[nz]) / span[nz]
    return out


def normalize_label(norm: MinMaxNormalization, label):
    span = norm.label_max - norm.label_min
    if span == 0:
        return np.zeros_like(np.asarray(label, dtype=float))
    return (np.asarray(label, dtype=float) - norm.label_min) / span


def denormalize_label(norm: MinMaxNormalization, value):
    span = norm.label_max - norm.label_min
    return np.asarray(value, dtype=float) * span + norm.label_min


def write_dataset_csv(dataset: Dataset, path) -> None:
    """CSV with one named column per feature plus `label`; normalization
    parameters go to a `<path>.meta.json` sidecar when fitted."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.layout.columns) + ["label"])
        for e in dataset.entries:
            writer.writerow([_fmt(v) for v in e.features] + [_fmt(e.label)])
    meta = {"layout_version": dataset.layout.version, "columns": list(dataset.layout.columns)}
    if dataset.normalization is not None:
        meta["normalization"] = dataset.normalization.to_dict()
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or tuple(header[:-1]) != LAYOUT.columns:
            raise ValueError(f"{path}: header does not match feature layout v{LAYOUT.version}")
        entries = [
            DatasetEntry(features=tuple(float(v) for v in row[:-1]), label=float(row[-1]))
            for row in reader
        ]
    dataset = Dataset(entries=entries)
    try:
        with open(str(path) + ".meta.json") as fh:
            meta = json.load(fh)
        if "normalization" in meta:
            dataset.normalization = MinMaxNormalization.from_dict(meta["normalization"])
    except FileNotFoundError:
        pass
    return dataset


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))
