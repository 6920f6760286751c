"""Synthetic degradation generator: the desk-scale stand-in datasource.

One latent monotone degradation process per unit drives both the
prognostics targets (remaining life countdown) and the diagnostics labels
(regime ids from latent thresholds), so a single fixture serves both task
families. Generation is a pure function of the spec, seed included.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Datasource, SplitDatasetContainer, UnitSeries

REGIME_THRESHOLDS = (2.0 / 3.0, 1.0 / 3.0)  # healthy / degraded / critical


@dataclass(frozen=True)
class SyntheticDegradationSpec:
    n_units: dict = field(default_factory=lambda: {"train": 8, "val": 3, "test": 3})
    time_range: tuple[int, int] = (40, 80)
    n_features: int = 4
    degradation: str = "linear"  # linear | exponential
    noise_scale: float = 0.02
    task_kind: str = "prognostics"
    rul_clip: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.degradation not in ("linear", "exponential"):
            raise ValueError(f"unknown degradation shape {self.degradation!r}")
        if self.time_range[0] < 2 or self.time_range[1] < self.time_range[0]:
            raise ValueError("time_range must be (min>=2, max>=min)")


def _latent(shape: str, length: int) -> np.ndarray:
    """Monotone health indicator: 1 at birth, exactly 0 at end of life."""
    tau = np.arange(length, dtype=np.float64) / (length - 1)
    if shape == "linear":
        return 1.0 - tau
    decay = np.exp(-3.0 * tau)
    return (decay - decay[-1]) / (1.0 - decay[-1])


def regime_labels(latent: np.ndarray) -> np.ndarray:
    labels = np.zeros(latent.shape[0], dtype=np.int64)
    labels[latent <= REGIME_THRESHOLDS[0]] = 1
    labels[latent <= REGIME_THRESHOLDS[1]] = 2
    return labels


@dataclass(frozen=True)
class SyntheticDatasource(Datasource):
    """Datasource adapter wrapping the generator."""

    spec: SyntheticDegradationSpec

    def load(self) -> SplitDatasetContainer:
        return generate_synthetic(self.spec)


UNIT_JITTER = 0.05  # per-unit sensor-calibration spread around the fleet mixing


def generate_synthetic(spec: SyntheticDegradationSpec) -> SplitDatasetContainer:
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    splits: dict[str, list[UnitSeries]] = {}
    channel_names = [f"sensor_{i}" for i in range(spec.n_features)]
    # the fleet shares one sensor mixing; units vary only by calibration jitter
    fleet_coeffs = rng.uniform(0.5, 2.0, size=spec.n_features)
    fleet_offsets = rng.uniform(-1.0, 1.0, size=spec.n_features)
    for split in ("train", "val", "test"):
        units = []
        for index in range(spec.n_units.get(split, 0)):
            length = int(rng.integers(spec.time_range[0], spec.time_range[1] + 1))
            latent = _latent(spec.degradation, length)
            coeffs = fleet_coeffs * (1.0 + UNIT_JITTER * rng.normal(size=spec.n_features))
            offsets = fleet_offsets + UNIT_JITTER * rng.normal(size=spec.n_features)
            noise = rng.normal(0.0, 1.0, size=(length, spec.n_features))
            channels = latent[:, None] * coeffs[None, :] + offsets[None, :]
            channels = channels + spec.noise_scale * noise
            units.append(
                UnitSeries(
                    unit_id=f"{split}_{index:03d}",
                    channels=channels,
                    channel_names=list(channel_names),
                    labels=regime_labels(latent),
                )
            )
        splits[split] = units
    return SplitDatasetContainer(splits=splits)
