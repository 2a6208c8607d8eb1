"""Trials, displacement features, padding, splits, and on-disk formats.

A dataset is a collection of keypoint trials (per-frame 2D joint positions
with frame- and trial-level binary labels). Featurization turns a trial into
a fixed-length matrix of signed per-coordinate displacements from the first
frame; trials shorter than the frame capacity are padded with zero rows that
carry the "normal" label.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataValidationError

LABEL_COMPENSATORY = 0
LABEL_NORMAL = 1
SIDES = ("affected", "unaffected")
PROVENANCES = ("synthetic", "ingested")

DEFAULT_T_MAX = 394
DEFAULT_JOINTS = (
    "Head",
    "Neck",
    "ShoulderRight",
    "ElbowRight",
    "WristRight",
    "ShoulderLeft",
    "ElbowLeft",
    "WristLeft",
)

_CACHE_MAGIC = b"FTRCACH1"
_CACHE_HEADER = struct.Struct("<8sII")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class JointLayout:
    """Ordered joint names; features are (x, y) per joint in joint order."""

    joints: tuple[str, ...] = DEFAULT_JOINTS

    def __post_init__(self) -> None:
        if len(self.joints) == 0:
            raise DataValidationError("layout needs at least one joint")
        if len(set(self.joints)) != len(self.joints):
            raise DataValidationError("duplicate joint names in layout")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def feature_count(self) -> int:
        return 2 * len(self.joints)

    def feature_index(self, joint: str, coord: str) -> int:
        """Index of a joint coordinate in the flattened feature axis."""
        c = {"x": 0, "y": 1}[coord.lower()]
        return 2 * self.joints.index(joint) + c

    def feature_names(self) -> list[str]:
        return [f"{j}{c}" for j in self.joints for c in ("X", "Y")]


@dataclass(frozen=True)
class KeypointTrial:
    """One exercise trial: raw keypoints plus frame and trial labels.

    frames has shape (L, joint_count, 2) in pixels; frame_labels has length L
    over {0 = compensatory, 1 = normal}; trial_label is 0 exactly when some
    frame is compensatory.
    """

    trial_id: str
    patient_id: str
    side: str
    frames: np.ndarray
    frame_labels: np.ndarray
    trial_label: int

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        labels = np.asarray(self.frame_labels, dtype=np.int64)
        if frames.ndim != 3 or frames.shape[2] != 2:
            raise DataValidationError(
                f"trial {self.trial_id!r}: frames must have shape (L, joints, 2), "
                f"got {frames.shape}"
            )
        if frames.shape[0] < 1:
            raise DataValidationError(f"trial {self.trial_id!r}: no frames")
        if not np.isfinite(frames).all():
            raise DataValidationError(
                f"trial {self.trial_id!r}: non-finite coordinate"
            )
        if labels.shape != (frames.shape[0],):
            raise DataValidationError(
                f"trial {self.trial_id!r}: frame_labels length {labels.shape} "
                f"does not match frame count {frames.shape[0]}"
            )
        if not np.isin(labels, (LABEL_COMPENSATORY, LABEL_NORMAL)).all():
            raise DataValidationError(
                f"trial {self.trial_id!r}: frame labels must be 0 or 1"
            )
        if self.side not in SIDES:
            raise DataValidationError(
                f"trial {self.trial_id!r}: side must be one of {SIDES}"
            )
        if int(self.trial_label) != int(labels.min()):
            raise DataValidationError(
                f"trial {self.trial_id!r}: trial_label {self.trial_label} "
                f"inconsistent with frame labels"
            )
        object.__setattr__(self, "frames", _readonly(frames))
        object.__setattr__(self, "frame_labels", _readonly(labels))
        object.__setattr__(self, "trial_label", int(self.trial_label))

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def joint_count(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class FeatureTrial:
    """Displacement-feature matrix for a trial, optionally padded.

    features has shape (T, F); row t holds the signed displacement of every
    joint coordinate from its position in frame 0. Rows at or beyond
    original_length are padding: exactly zero and labelled normal.
    """

    trial_id: str
    features: np.ndarray
    original_length: int
    frame_labels: np.ndarray
    trial_label: int

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.frame_labels, dtype=np.int64)
        L = int(self.original_length)
        if feats.ndim != 2:
            raise DataValidationError(
                f"trial {self.trial_id!r}: features must be 2-D, got {feats.shape}"
            )
        if not (1 <= L <= feats.shape[0]):
            raise DataValidationError(
                f"trial {self.trial_id!r}: original_length {L} outside "
                f"[1, {feats.shape[0]}]"
            )
        if not np.isfinite(feats).all():
            raise DataValidationError(f"trial {self.trial_id!r}: non-finite feature")
        if labels.shape != (feats.shape[0],):
            raise DataValidationError(
                f"trial {self.trial_id!r}: frame_labels length mismatch"
            )
        if not np.isin(labels, (LABEL_COMPENSATORY, LABEL_NORMAL)).all():
            raise DataValidationError(
                f"trial {self.trial_id!r}: frame labels must be 0 or 1"
            )
        if np.any(feats[0] != 0.0):
            raise DataValidationError(
                f"trial {self.trial_id!r}: first feature row must be zero"
            )
        if np.any(feats[L:] != 0.0):
            raise DataValidationError(
                f"trial {self.trial_id!r}: padded rows must be zero"
            )
        if np.any(labels[L:] != LABEL_NORMAL):
            raise DataValidationError(
                f"trial {self.trial_id!r}: padded frames must be labelled normal"
            )
        if int(self.trial_label) != int(labels.min()):
            raise DataValidationError(
                f"trial {self.trial_id!r}: trial_label inconsistent with frame labels"
            )
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "frame_labels", _readonly(labels))
        object.__setattr__(self, "original_length", L)
        object.__setattr__(self, "trial_label", int(self.trial_label))

    @property
    def frame_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    @property
    def padded_mask(self) -> np.ndarray:
        return np.arange(self.frame_count) >= self.original_length


@dataclass(frozen=True)
class DatasetManifest:
    """A set of trials sharing one layout and one frame capacity."""

    trials: tuple[KeypointTrial, ...]
    t_max: int = DEFAULT_T_MAX
    layout: JointLayout = field(default_factory=JointLayout)
    provenance: str = "synthetic"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))
        if self.t_max < 1:
            raise DataValidationError("t_max must be at least 1")
        if self.provenance not in PROVENANCES:
            raise DataValidationError(
                f"provenance must be one of {PROVENANCES}, got {self.provenance!r}"
            )
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise DataValidationError("duplicate trial ids in manifest")
        for t in self.trials:
            if t.joint_count != self.layout.joint_count:
                raise DataValidationError(
                    f"trial {t.trial_id!r}: {t.joint_count} joints, layout "
                    f"expects {self.layout.joint_count}"
                )
            if t.length > self.t_max:
                raise DataValidationError(
                    f"trial {t.trial_id!r}: length {t.length} exceeds t_max "
                    f"{self.t_max}"
                )

    def __len__(self) -> int:
        return len(self.trials)


def extract_features(trial: KeypointTrial, layout: JointLayout) -> FeatureTrial:
    """Signed per-coordinate displacement from the first frame, unpadded."""
    if trial.joint_count != layout.joint_count:
        raise DataValidationError(
            f"trial {trial.trial_id!r}: {trial.joint_count} joints, layout "
            f"expects {layout.joint_count}"
        )
    disp = trial.frames - trial.frames[0]
    feats = disp.reshape(trial.length, layout.feature_count)
    return FeatureTrial(
        trial_id=trial.trial_id,
        features=feats,
        original_length=trial.length,
        frame_labels=trial.frame_labels,
        trial_label=trial.trial_label,
    )


def pad_trial(ft: FeatureTrial, t_max: int) -> FeatureTrial:
    """Extend a feature trial to t_max rows of zero displacement, label normal."""
    if ft.frame_count > t_max:
        raise DataValidationError(
            f"trial {ft.trial_id!r}: length {ft.frame_count} exceeds t_max {t_max}"
        )
    if ft.frame_count == t_max:
        return ft
    feats = np.zeros((t_max, ft.feature_count))
    feats[: ft.frame_count] = ft.features
    labels = np.full(t_max, LABEL_NORMAL, dtype=np.int64)
    labels[: ft.frame_count] = ft.frame_labels
    return FeatureTrial(
        trial_id=ft.trial_id,
        features=feats,
        original_length=ft.original_length,
        frame_labels=labels,
        trial_label=ft.trial_label,
    )


def featurize(manifest: DatasetManifest) -> list[FeatureTrial]:
    """Extract and pad displacement features for every trial in the manifest."""
    return [
        pad_trial(extract_features(t, manifest.layout), manifest.t_max)
        for t in manifest.trials
    ]


def split_dataset(
    manifest: DatasetManifest, train_fraction: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Trial-level split, deterministic for a fixed (manifest, fraction, seed)."""
    if not 0.0 < train_fraction < 1.0:
        raise DataValidationError(
            f"train_fraction must be in (0, 1), got {train_fraction}"
        )
    n = len(manifest.trials)
    if n == 0:
        raise DataValidationError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    def subset(idx: np.ndarray) -> DatasetManifest:
        return DatasetManifest(
            trials=tuple(manifest.trials[i] for i in idx),
            t_max=manifest.t_max,
            layout=manifest.layout,
            provenance=manifest.provenance,
            seed=manifest.seed,
        )

    return subset(train_idx), subset(test_idx)


def save_dataset(manifest: DatasetManifest, path) -> None:
    """Write one header line plus one JSON record per trial."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "t_max": manifest.t_max,
            "joints": list(manifest.layout.joints),
            "provenance": manifest.provenance,
            "seed": manifest.seed,
        }
        fh.write(json.dumps(header) + "\n")
        for t in manifest.trials:
            record = {
                "trial_id": t.trial_id,
                "patient_id": t.patient_id,
                "side": t.side,
                "frames": t.frames.tolist(),
                "frame_labels": t.frame_labels.tolist(),
                "trial_label": t.trial_label,
            }
            fh.write(json.dumps(record) + "\n")


_TRIAL_FIELDS = (
    "trial_id",
    "patient_id",
    "side",
    "frames",
    "frame_labels",
    "trial_label",
)


def load_dataset(path) -> DatasetManifest:
    """Parse a dataset file; validation errors name the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataValidationError(f"{path}: empty dataset file")

    def parse(lineno: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataValidationError(f"{path}:{lineno}: expected an object")
        return obj

    header = parse(1, lines[0])
    for key in ("t_max", "joints", "provenance", "seed"):
        if key not in header:
            raise DataValidationError(f"{path}:1: missing field {key!r}")
    layout = JointLayout(joints=tuple(header["joints"]))

    trials = []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        rec = parse(lineno, text)
        for field_name in _TRIAL_FIELDS:
            if field_name not in rec:
                raise DataValidationError(
                    f"{path}:{lineno}: missing field {field_name!r}"
                )
        try:
            trials.append(
                KeypointTrial(
                    trial_id=rec["trial_id"],
                    patient_id=rec["patient_id"],
                    side=rec["side"],
                    frames=np.asarray(rec["frames"], dtype=np.float64),
                    frame_labels=np.asarray(rec["frame_labels"], dtype=np.int64),
                    trial_label=int(rec["trial_label"]),
                )
            )
        except (DataValidationError, ValueError, TypeError) as exc:
            raise DataValidationError(f"{path}:{lineno}: {exc}") from exc
    try:
        return DatasetManifest(
            trials=tuple(trials),
            t_max=int(header["t_max"]),
            layout=layout,
            provenance=header["provenance"],
            seed=int(header["seed"]),
        )
    except DataValidationError as exc:
        raise DataValidationError(f"{path}: {exc}") from exc


def write_feature_cache(path, trials: Sequence[FeatureTrial], t_max: int) -> None:
    """Flat binary cache: 16-byte header then row-major float64 matrices."""
    if not trials:
        raise DataValidationError("feature cache needs at least one trial")
    feature_count = trials[0].feature_count
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(_CACHE_MAGIC, t_max, feature_count))
        for ft in trials:
            if ft.frame_count != t_max or ft.feature_count != feature_count:
                raise DataValidationError(
                    f"trial {ft.trial_id!r}: shape {ft.features.shape} does not "
                    f"match cache shape ({t_max}, {feature_count})"
                )
            fh.write(np.ascontiguousarray(ft.features, dtype="<f8").tobytes())


def read_feature_cache(path) -> np.ndarray:
    """Read a binary feature cache back as an (n, t_max, F) array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CACHE_HEADER.size:
        raise DataValidationError(f"{path}: truncated header")
    magic, t_max, feature_count = _CACHE_HEADER.unpack_from(blob)
    if magic != _CACHE_MAGIC:
        raise DataValidationError(f"{path}: bad magic {magic!r}")
    body = blob[_CACHE_HEADER.size :]
    stride = t_max * feature_count * 8
    if stride == 0 or len(body) % stride != 0:
        raise DataValidationError(f"{path}: body size {len(body)} not a multiple "
                                  f"of trial size {stride}")
    n = len(body) // stride
    out = np.frombuffer(body, dtype="<f8").reshape(n, t_max, feature_count)
    return out.astype(np.float64)
