"""Shared protocol semantics: split containers, fit-on-train transforms,
target construction, windowing, and the leakage audit.

Splits partition at the unit level (a unit_id lives in exactly one split);
transform statistics are pure functions of the train split and carry a
fingerprint so the audit can refit from scratch and compare. Windows are
labeled at their right edge.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .contracts import TargetSemantics, TaskContract
from .errors import EmptyTrainSplit, UnknownChannel

SPLITS = ("train", "val", "test")


class Datasource:
    """The container-producing interface every datasource adapter implements.

    Real-dataset adapters (turbofan, battery, ...) subclass this and return a
    unit-partitioned SplitDatasetContainer from `load`; the harness never
    sees anything below that boundary.
    """

    def load(self) -> "SplitDatasetContainer":
        raise NotImplementedError

#: pseudo-channel selecting the constructed per-time targets
TARGET_CHANNEL = "targets"

#: exact-arithmetic tolerance for the empirical leakage comparison (float64)
LEAKAGE_TOLERANCE = 1e-12


@dataclass
class UnitSeries:
    """One asset's multivariate time series plus optional per-time labels."""

    unit_id: str
    channels: np.ndarray  # (time, features), float64
    channel_names: list[str]
    labels: np.ndarray | None = None   # (time,) int regime ids
    targets: np.ndarray | None = None  # (time,) float, constructed downstream

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] < 1:
            raise ValueError(f"unit {self.unit_id}: channels must be (time>=1, features)")
        if len(self.channel_names) != self.channels.shape[1]:
            raise ValueError(f"unit {self.unit_id}: channel_names do not match channels")
        if not np.isfinite(self.channels).all():
            raise ValueError(f"unit {self.unit_id}: missing/non-finite values after ingestion")

    @property
    def length(self) -> int:
        return self.channels.shape[0]


@dataclass
class SplitDatasetContainer:
    splits: dict[str, list[UnitSeries]]

    def units(self, split: str) -> list[UnitSeries]:
        return self.splits.get(split, [])

    def all_unit_ids(self) -> list[str]:
        return [u.unit_id for split in SPLITS for u in self.units(split)]

    def split_overlaps(self) -> list[str]:
        """unit_ids appearing in more than one split (partition violations)."""
        seen: dict[str, str] = {}
        overlaps = []
        for split in SPLITS:
            for unit in self.units(split):
                if unit.unit_id in seen and seen[unit.unit_id] != split:
                    overlaps.append(unit.unit_id)
                seen.setdefault(unit.unit_id, split)
        return sorted(set(overlaps))

    def map_units(self, fn: Callable[[str, UnitSeries], UnitSeries]) -> "SplitDatasetContainer":
        return SplitDatasetContainer(
            splits={
                split: [fn(split, unit) for unit in units]
                for split, units in self.splits.items()
            }
        )


def construct_rul_targets(unit: UnitSeries, clip: float) -> np.ndarray:
    """Clipped linear countdown: target(t) = min(clip, T-1-t)."""
    if clip < 0:
        raise ValueError("clip must be >= 0")
    t = np.arange(unit.length, dtype=np.float64)
    return np.minimum(float(clip), unit.length - 1 - t)


def attach_targets(container: SplitDatasetContainer, clip: float) -> SplitDatasetContainer:
    return container.map_units(
        lambda _split, unit: replace(unit, targets=construct_rul_targets(unit, clip))
    )


# --- transforms -------------------------------------------------------------------


@dataclass(frozen=True)
class TransformSpec:
    name: str
    fit_on: str  # must be the literal "train"; enforced upstream at typecheck
    apply_to: tuple[str, ...]
    assign_to: object  # "all" | "targets" | list of channel names
    parameters: dict = field(default_factory=dict)

    def selected_channels(self, channel_names: list[str]) -> list[str]:
        if self.assign_to == "all":
            return list(channel_names)
        if self.assign_to == TARGET_CHANNEL:
            return [TARGET_CHANNEL]
        missing = [c for c in self.assign_to if c not in channel_names]
        if missing:
            raise UnknownChannel(f"transform {self.name}: unknown channel(s) {missing}")
        return list(self.assign_to)

    def targets_selected(self) -> bool:
        return self.assign_to == TARGET_CHANNEL


class ColumnTransform:
    """sklearn-style per-column scaler: fit / transform / inverse_transform."""

    stat_names: tuple[str, ...] = ()

    def fit(self, values: np.ndarray) -> "ColumnTransform":
        raise NotImplementedError

    def transform(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def statistics(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name + "_") for name in self.stat_names}

    def load_statistics(self, stats: Mapping[str, np.ndarray]) -> "ColumnTransform":
        for name in self.stat_names:
            setattr(self, name + "_", np.asarray(stats[name], dtype=np.float64))
        return self


class ZScoreTransform(ColumnTransform):
    stat_names = ("mean", "std")

    def fit(self, values):
        self.mean_ = values.mean(axis=0)
        std = values.std(axis=0)
        # constant columns scale by 1 instead of dividing by zero
        self.std_ = np.where(std == 0.0, 1.0, std)
        return self

    def transform(self, values):
        return (values - self.mean_) / self.std_

    def inverse_transform(self, values):
        return values * self.std_ + self.mean_


class MinMaxTransform(ColumnTransform):
    stat_names = ("min", "max")

    def fit(self, values):
        self.min_ = values.min(axis=0)
        self.max_ = values.max(axis=0)
        return self

    def transform(self, values):
        span = np.where(self.max_ - self.min_ == 0.0, 1.0, self.max_ - self.min_)
        return (values - self.min_) / span

    def inverse_transform(self, values):
        span = np.where(self.max_ - self.min_ == 0.0, 1.0, self.max_ - self.min_)
        return values * span + self.min_


TRANSFORM_KINDS: dict[str, type[ColumnTransform]] = {
    "zscore": ZScoreTransform,
    "minmax": MinMaxTransform,
}


@dataclass
class FittedTransform:
    spec: TransformSpec
    fitted_statistics: dict[str, np.ndarray]
    fit_fingerprint: str

    def column_transform(self) -> ColumnTransform:
        return TRANSFORM_KINDS[self.spec.name]().load_statistics(self.fitted_statistics)

    def transform_values(self, values: np.ndarray) -> np.ndarray:
        return self.column_transform().transform(values)

    def inverse_values(self, values: np.ndarray) -> np.ndarray:
        return self.column_transform().inverse_transform(values)


def _fingerprint(train_ids: list[str], stats: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(sorted(train_ids)).encode())
    for name in sorted(stats):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(stats[name], dtype="<f8").tobytes())
    return digest.hexdigest()


def _stacked_values(spec: TransformSpec, units: Iterable[UnitSeries]) -> np.ndarray:
    """Stack the selected columns of the given units into (rows, n_selected)."""
    blocks = []
    for unit in units:
        if spec.targets_selected():
            if unit.targets is None:
                raise ValueError(f"unit {unit.unit_id} has no constructed targets")
            blocks.append(unit.targets.reshape(-1, 1))
        else:
            names = spec.selected_channels(unit.channel_names)
            cols = [unit.channel_names.index(c) for c in names]
            blocks.append(unit.channels[:, cols])
    if not blocks:
        raise EmptyTrainSplit("no units to fit on")
    return np.concatenate(blocks, axis=0)


def compute_fit_statistics(
    spec: TransformSpec, units: list[UnitSeries]
) -> dict[str, np.ndarray]:
    """Fit statistics over exactly these units (the audit refits through this)."""
    if spec.name not in TRANSFORM_KINDS:
        raise ValueError(f"unknown transform {spec.name!r}")
    values = _stacked_values(spec, units)
    return TRANSFORM_KINDS[spec.name]().fit(values).statistics()


def fit_transform(spec: TransformSpec, container: SplitDatasetContainer) -> FittedTransform:
    """Fit on the train split only; record the fingerprint of what was fitted."""
    train_units = container.units("train")
    if not train_units:
        raise EmptyTrainSplit("container has no train units")
    stats = compute_fit_statistics(spec, train_units)
    return FittedTransform(
        spec=spec,
        fitted_statistics=stats,
        fit_fingerprint=_fingerprint([u.unit_id for u in train_units], stats),
    )


def apply_transform(
    fitted: FittedTransform, container: SplitDatasetContainer
) -> SplitDatasetContainer:
    """Scale only the apply_to splits and assign_to channels; everything else
    is byte-identical. Target-channel transforms are applied at window/eval
    time, not here."""
    spec = fitted.spec
    if spec.targets_selected():
        return container

    def scale(split: str, unit: UnitSeries) -> UnitSeries:
        if split not in spec.apply_to:
            return unit
        names = spec.selected_channels(unit.channel_names)
        cols = [unit.channel_names.index(c) for c in names]
        channels = unit.channels.copy()
        channels[:, cols] = fitted.transform_values(channels[:, cols])
        return replace(unit, channels=channels)

    return container.map_units(scale)


def inverse_transform(fitted: FittedTransform, values: np.ndarray) -> np.ndarray:
    """Map transformed values back to the original scale (inverse of apply)."""
    return fitted.inverse_values(values)


# --- windowing --------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    length: int
    stride: int
    alignment: str = "right_edge_label"

    def __post_init__(self):
        if self.length < 1 or self.stride < 1:
            raise ValueError("length and stride must be >= 1")
        if self.alignment != "right_edge_label":
            raise ValueError(f"unsupported alignment {self.alignment!r}")

    def starts(self, length_of_unit: int) -> range:
        if length_of_unit < self.length:
            return range(0)
        return range(0, length_of_unit - self.length + 1, self.stride)


@dataclass
class WindowedSplit:
    features: np.ndarray   # (N, length, n_features)
    targets: np.ndarray    # (N, 1, 1) continuous or (N,) labels
    unit_ids: list[str]
    starts: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class WindowedDataset:
    splits: dict[str, WindowedSplit]
    window: WindowSpec
    semantics: TargetSemantics

    def split(self, name: str) -> WindowedSplit:
        return self.splits[name]


def window(
    container: SplitDatasetContainer,
    spec: WindowSpec,
    contract: TaskContract,
) -> WindowedDataset:
    """Slice every unit into right-edge-labeled windows.

    Starts run 0, stride, 2*stride, ... while start+length <= T; a unit
    shorter than the window length yields zero windows. Output ordering is
    canonical: unit_id then start.
    """
    classification = contract.target_semantics is TargetSemantics.CLASS_LABEL
    splits: dict[str, WindowedSplit] = {}
    for split_name in SPLITS:
        feats, labels, ids, starts = [], [], [], []
        for unit in sorted(container.units(split_name), key=lambda u: u.unit_id):
            series = unit.labels if classification else unit.targets
            if series is None:
                kind = "labels" if classification else "targets"
                raise ValueError(f"unit {unit.unit_id} carries no per-time {kind}")
            for start in spec.starts(unit.length):
                end = start + spec.length
                feats.append(unit.channels[start:end])
                labels.append(series[end - 1])
                ids.append(unit.unit_id)
                starts.append(start)
        n = len(feats)
        features = (
            np.stack(feats) if n else np.zeros((0, spec.length, _n_features(container)))
        )
        if classification:
            targets = np.asarray(labels, dtype=np.float64)
        else:
            targets = np.asarray(labels, dtype=np.float64).reshape(n, 1, 1)
        splits[split_name] = WindowedSplit(
            features=features,
            targets=targets,
            unit_ids=ids,
            starts=np.asarray(starts, dtype=np.int64),
        )
    return WindowedDataset(splits=splits, window=spec, semantics=contract.target_semantics)


def _n_features(container: SplitDatasetContainer) -> int:
    for split in SPLITS:
        for unit in container.units(split):
            return unit.channels.shape[1]
    return 0


def expected_window_count(T: int, length: int, stride: int) -> int:
    return max(0, (T - length) // stride + 1)


# --- leakage audit ----------------------------------------------------------------


@dataclass(frozen=True)
class LeakageViolation:
    slot: str       # implicated slot family value
    rule_id: str    # leakage_decl | empirical_mismatch | split_overlap
    message: str


@dataclass
class LeakageReport:
    violations: list[LeakageViolation] = field(default_factory=list)
    max_statistic_deviation: float = 0.0

    @property
    def clean(self) -> bool:
        return not self.violations


def leakage_audit(
    fitted_transforms: Iterable[FittedTransform],
    container: SplitDatasetContainer,
) -> LeakageReport:
    """Two-layer audit.

    Layer 1 checks every spec declares fit_on=train. Layer 2 refits each
    transform from scratch on the train split and compares statistics to the
    fitted ones within 1e-12; any deviation means the statistics saw data
    outside train. Split-integrity (a unit in two splits) is also flagged,
    implicating the datasource.
    """
    report = LeakageReport()
    for unit_id in container.split_overlaps():
        report.violations.append(
            LeakageViolation(
                slot="datasource",
                rule_id="split_overlap",
                message=f"unit {unit_id!r} appears in more than one split",
            )
        )
    train_units = container.units("train")
    for fitted in fitted_transforms:
        if fitted.spec.fit_on != "train":
            report.violations.append(
                LeakageViolation(
                    slot="transform",
                    rule_id="leakage_decl",
                    message=f"transform {fitted.spec.name} declares fit_on="
                    f"{fitted.spec.fit_on!r}",
                )
            )
            continue
        reference = compute_fit_statistics(fitted.spec, train_units)
        deviation = 0.0
        for name in sorted(reference):
            got = np.asarray(fitted.fitted_statistics.get(name))
            want = reference[name]
            if got is None or got.shape != want.shape:
                deviation = float("inf")
                break
            deviation = max(deviation, float(np.abs(got - want).max()))
        report.max_statistic_deviation = max(report.max_statistic_deviation, deviation)
        if deviation > LEAKAGE_TOLERANCE:
            report.violations.append(
                LeakageViolation(
                    slot="transform",
                    rule_id="empirical_mismatch",
                    message=f"transform {fitted.spec.name} statistics deviate from a "
                    f"train-only refit by {deviation:.3e}",
                )
            )
    return report


# --- container on-disk format -------------------------------------------------------


def save_container(container: SplitDatasetContainer, root: Path) -> None:
    """One directory per split; per unit a JSON header plus a row-major
    little-endian float64 matrix file."""
    root = Path(root)
    for split in SPLITS:
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for unit in container.units(split):
            header = {
                "unit_id": unit.unit_id,
                "channel_names": unit.channel_names,
                "dtype": "float64",
                "order": "row-major",
                "length": unit.length,
                "labels": None if unit.labels is None else unit.labels.tolist(),
            }
            (split_dir / f"{unit.unit_id}.json").write_text(
                json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            (split_dir / f"{unit.unit_id}.bin").write_bytes(
                np.ascontiguousarray(unit.channels, dtype="<f8").tobytes()
            )


def load_container(root: Path) -> SplitDatasetContainer:
    root = Path(root)
    splits: dict[str, list[UnitSeries]] = {}
    for split in SPLITS:
        units = []
        split_dir = root / split
        if split_dir.is_dir():
            for header_path in sorted(split_dir.glob("*.json")):
                header = json.loads(header_path.read_text(encoding="utf-8"))
                blob = header_path.with_suffix(".bin").read_bytes()
                channels = np.frombuffer(blob, dtype="<f8").reshape(
                    header["length"], len(header["channel_names"])
                )
                labels = header.get("labels")
                units.append(
                    UnitSeries(
                        unit_id=header["unit_id"],
                        channels=channels.astype(np.float64),
                        channel_names=list(header["channel_names"]),
                        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
                    )
                )
        splits[split] = units
    return SplitDatasetContainer(splits=splits)


@dataclass
class DirectoryDatasource(Datasource):
    """Adapter for containers already materialized in the on-disk format."""

    root: Path

    def load(self) -> SplitDatasetContainer:
        return load_container(self.root)
