"""Synthetic exercise-trial generator with injectable compensatory segments.

Each trial is a smooth reach motion of one arm (wrist and elbow follow the
profile 3u^2 - 2u^3) on top of a fixed base pose, with iid Gaussian pixel
noise everywhere. A compensatory trial additionally displaces the head, the
neck, and both shoulders during one contiguous segment, ramped in and out
over a few frames. Frame labels mark exactly the injected segment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    DEFAULT_T_MAX,
    LABEL_COMPENSATORY,
    LABEL_NORMAL,
    DatasetManifest,
    JointLayout,
    KeypointTrial,
)
from .errors import DataValidationError

# base pose in pixels, indexed like DEFAULT_JOINTS
_BASE_POSE = np.array(
    [
        [320.0, 80.0],   # Head
        [320.0, 140.0],  # Neck
        [380.0, 150.0],  # ShoulderRight
        [400.0, 230.0],  # ElbowRight
        [410.0, 300.0],  # WristRight
        [260.0, 150.0],  # ShoulderLeft
        [240.0, 230.0],  # ElbowLeft
        [230.0, 300.0],  # WristLeft
    ]
)
_HEAD, _NECK = 0, 1
_SHOULDER_R, _ELBOW_R, _WRIST_R = 2, 3, 4
_SHOULDER_L, _ELBOW_L, _WRIST_L = 5, 6, 7

RAMP_FRAMES = 5


@dataclass(frozen=True)
class SynthConfig:
    patient_count: int = 15
    trials_per_patient_per_side: int = 10
    length_range: tuple[int, int] = (120, 200)
    compensation_probability_affected: float = 0.55
    compensation_probability_unaffected: float = 0.0
    compensation_coverage_range: tuple[float, float] = (0.5, 0.8)
    compensation_amplitude: float = 25.0
    motion_amplitude: float = 80.0
    noise_std: float = 1.0
    t_max: int = DEFAULT_T_MAX
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "length_range", tuple(self.length_range))
        object.__setattr__(
            self, "compensation_coverage_range",
            tuple(self.compensation_coverage_range),
        )
        if self.patient_count < 1:
            raise DataValidationError("patient_count must be at least 1")
        if self.trials_per_patient_per_side < 1:
            raise DataValidationError(
                "trials_per_patient_per_side must be at least 1"
            )
        lo, hi = self.length_range
        if not (1 <= lo <= hi <= self.t_max):
            raise DataValidationError(
                f"length_range {self.length_range} must satisfy "
                f"1 <= min <= max <= t_max ({self.t_max})"
            )
        for name in (
            "compensation_probability_affected",
            "compensation_probability_unaffected",
        ):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DataValidationError(f"{name} must be in [0, 1], got {p}")
        clo, chi = self.compensation_coverage_range
        if not (0.0 <= clo <= chi <= 1.0):
            raise DataValidationError(
                f"compensation_coverage_range {self.compensation_coverage_range} "
                f"must be within [0, 1] with min <= max"
            )
        if self.compensation_amplitude < 0 or self.motion_amplitude < 0:
            raise DataValidationError("amplitudes must be non-negative")
        if self.noise_std < 0:
            raise DataValidationError("noise_std must be non-negative")

    def compensation_probability(self, side: str) -> float:
        if side == "affected":
            return self.compensation_probability_affected
        return self.compensation_probability_unaffected

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(
                f"unknown synth config fields: {sorted(unknown)}"
            )
        return cls(**obj)


def load_synth_config(path) -> SynthConfig:
    """Read a SynthConfig from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataValidationError(f"{path}: config must be a JSON object")
    try:
        return SynthConfig.from_dict(obj)
    except TypeError as exc:
        raise DataValidationError(f"{path}: {exc}") from exc


def _reach_profile(length: int) -> np.ndarray:
    if length == 1:
        return np.zeros(1)
    u = np.arange(length) / (length - 1)
    return 3.0 * u**2 - 2.0 * u**3


def _segment_envelope(length: int, start: int, seg_len: int) -> np.ndarray:
    """Unit plateau over the segment, linear ramps over RAMP_FRAMES."""
    env = np.zeros(length)
    t = np.arange(start, start + seg_len)
    rise = (t - start + 1) / RAMP_FRAMES
    fall = (start + seg_len - t) / RAMP_FRAMES
    env[t] = np.minimum(1.0, np.minimum(rise, fall))
    return env


def generate_trial(
    config: SynthConfig,
    patient_id: str,
    side: str,
    rng: np.random.Generator,
    trial_index: int = 0,
) -> KeypointTrial:
    """Generate one labelled trial, consuming randomness only from rng.

    The draw order is fixed (length, compensation coin, coverage, segment
    start, noise) so a trial is reproducible from its substream alone.
    """
    if side not in ("affected", "unaffected"):
        raise DataValidationError(f"unknown side {side!r}")
    lo, hi = config.length_range
    length = int(rng.integers(lo, hi + 1))
    pos = np.tile(_BASE_POSE, (length, 1, 1))
    reach = _reach_profile(length)

    # the affected side exercises the right arm, the unaffected the left;
    # lateral motion mirrors accordingly
    if side == "affected":
        wrist, elbow = _WRIST_R, _ELBOW_R
        shoulder_ipsi, shoulder_contra = _SHOULDER_R, _SHOULDER_L
        lat = -1.0
    else:
        wrist, elbow = _WRIST_L, _ELBOW_L
        shoulder_ipsi, shoulder_contra = _SHOULDER_L, _SHOULDER_R
        lat = 1.0
    amp = config.motion_amplitude
    pos[:, wrist] += amp * reach[:, None] * np.array([-0.35 * lat, -0.94])
    pos[:, elbow] += 0.55 * amp * reach[:, None] * np.array([-0.25 * lat, -0.97])

    labels = np.full(length, LABEL_NORMAL, dtype=np.int64)
    if rng.random() < config.compensation_probability(side):
        clo, chi = config.compensation_coverage_range
        coverage = rng.uniform(clo, chi)
        seg_len = int(np.clip(round(coverage * length), 1, length))
        start = int(rng.integers(0, length - seg_len + 1))
        labels[start : start + seg_len] = LABEL_COMPENSATORY
        env = _segment_envelope(length, start, seg_len)
        comp = config.compensation_amplitude
        # compensation phenotype: head and trunk lean sideways, the
        # contralateral shoulder follows, the exercising shoulder hikes up
        pos[:, _HEAD, 0] += comp * env * lat
        pos[:, _NECK, 0] += 0.6 * comp * env * lat
        pos[:, shoulder_contra, 0] += 0.8 * comp * env * lat
        pos[:, shoulder_ipsi, 1] += -0.7 * comp * env

    pos += rng.normal(0.0, config.noise_std, pos.shape)
    return KeypointTrial(
        trial_id=f"{patient_id}-{side}-{trial_index:02d}",
        patient_id=patient_id,
        side=side,
        frames=pos,
        frame_labels=labels,
        trial_label=int(labels.min()),
    )


def trial_rng(seed: int, patient_index: int, side: str, trial_index: int
              ) -> np.random.Generator:
    """Independent substream for one trial, keyed by its identity."""
    side_key = 0 if side == "affected" else 1
    ss = np.random.SeedSequence(
        seed, spawn_key=(patient_index, side_key, trial_index)
    )
    return np.random.default_rng(ss)


def generate_dataset(config: SynthConfig) -> DatasetManifest:
    """patient_count x 2 sides x trials_per_patient_per_side labelled trials."""
    trials = []
    for p in range(config.patient_count):
        patient_id = f"P{p:02d}"
        for side in ("affected", "unaffected"):
            for k in range(config.trials_per_patient_per_side):
                rng = trial_rng(config.seed, p, side, k)
                trials.append(
                    generate_trial(config, patient_id, side, rng, trial_index=k)
                )
    return DatasetManifest(
        trials=tuple(trials),
        t_max=config.t_max,
        layout=JointLayout(),
        provenance="synthetic",
        seed=config.seed,
    )


def with_overrides(config: SynthConfig, **overrides) -> SynthConfig:
    """Return a copy with the given fields replaced (None values skipped)."""
    filtered = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **filtered)
