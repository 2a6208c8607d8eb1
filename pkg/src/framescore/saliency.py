"""Per-frame scores from input gradients: aggregation, pooling, windows.

The saliency matrix of a trial is the loss gradient at the trial's true
label, reshaped to frames x features. A frame's raw score is the sum of
absolute gradient entries across features; normalized scores are min-max
scaled over a pooled set of selected frames, so they depend on which frames
the experiment admits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import FeatureTrial
from .errors import ContractError, DataValidationError
from .network import TrainedModel, input_gradient

SelectionPredicate = Callable[["FrameScoreTrack", int], bool]


@dataclass(frozen=True)
class SaliencyMatrix:
    """Signed gradient entries for one trial, shape (frames, features)."""

    trial_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataValidationError("saliency values must be 2-D")
        if not np.isfinite(values).all():
            raise DataValidationError(
                f"trial {self.trial_id!r}: non-finite saliency"
            )
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FrameScoreTrack:
    """Per-frame aggregated saliency for one trial."""

    trial_id: str
    raw_scores: np.ndarray
    padded_mask: np.ndarray
    normalized_scores: np.ndarray | None = None

    def __post_init__(self) -> None:
        raw = np.asarray(self.raw_scores, dtype=np.float64)
        mask = np.asarray(self.padded_mask, dtype=bool)
        if raw.ndim != 1 or mask.shape != raw.shape:
            raise DataValidationError("raw_scores and padded_mask must align")
        if (raw < 0).any():
            raise DataValidationError("raw scores must be non-negative")
        object.__setattr__(self, "raw_scores", raw)
        object.__setattr__(self, "padded_mask", mask)

    @property
    def frame_count(self) -> int:
        return len(self.raw_scores)


@dataclass(frozen=True)
class ScoreEntry:
    """One pooled frame: identity, scores, label, padding flag."""

    trial_id: str
    frame_index: int
    raw_score: float
    frame_label: int
    padded: bool
    normalized_score: float | None = None


@dataclass(frozen=True)
class PooledScoreSet:
    """Entries normalized together over one pooled min/max."""

    entries: tuple[ScoreEntry, ...]
    pool_min: float
    pool_max: float

    def scores(self) -> np.ndarray:
        return np.array([e.normalized_score for e in self.entries])

    def labels(self) -> np.ndarray:
        return np.array([e.frame_label for e in self.entries], dtype=np.int64)


def compute_saliency(model: TrainedModel, ft: FeatureTrial) -> SaliencyMatrix:
    """Loss gradient at the trial's true label, in frame x feature shape."""
    grad = input_gradient(model, ft.features.ravel(), ft.trial_label)
    return SaliencyMatrix(ft.trial_id, grad.reshape(ft.features.shape))


def frame_aggregate(sal: SaliencyMatrix, original_length: int) -> FrameScoreTrack:
    """Raw frame score: sum of absolute gradient entries over features."""
    raw = np.abs(sal.values).sum(axis=1)
    mask = np.arange(len(raw)) >= original_length
    return FrameScoreTrack(sal.trial_id, raw, mask)


def compute_tracks(model: TrainedModel, ftrials: Sequence[FeatureTrial]
                   ) -> list[FrameScoreTrack]:
    return [
        frame_aggregate(compute_saliency(model, ft), ft.original_length)
        for ft in ftrials
    ]


def normalize_pool(entries: Sequence[ScoreEntry]) -> PooledScoreSet:
    """Min-max normalize raw scores over exactly these entries.

    A degenerate pool (max == min) normalizes to all zeros, which every
    threshold classifies as normal.
    """
    if not entries:
        raise ContractError("cannot normalize an empty pool")
    raws = np.array([e.raw_score for e in entries])
    pool_min = float(raws.min())
    pool_max = float(raws.max())
    if pool_max > pool_min:
        normalized = (raws - pool_min) / (pool_max - pool_min)
    else:
        normalized = np.zeros_like(raws)
    out = tuple(
        replace(e, normalized_score=float(v)) for e, v in zip(entries, normalized)
    )
    return PooledScoreSet(out, pool_min, pool_max)


def pool_and_normalize(
    tracks: Sequence[FrameScoreTrack],
    selection: SelectionPredicate,
    frame_labels: Mapping[str, np.ndarray],
) -> PooledScoreSet:
    """Collect the frames admitted by the predicate, then normalize them."""
    entries = []
    for track in tracks:
        labels = frame_labels[track.trial_id]
        for t in range(track.frame_count):
            if selection(track, t):
                entries.append(
                    ScoreEntry(
                        trial_id=track.trial_id,
                        frame_index=t,
                        raw_score=float(track.raw_scores[t]),
                        frame_label=int(labels[t]),
                        padded=bool(track.padded_mask[t]),
                    )
                )
    return normalize_pool(entries)


def window_aggregate(
    scores: np.ndarray, labels: np.ndarray, window_size: int
) -> list[tuple[float, int]]:
    """Non-overlapping windows over one trial's selected frames.

    Window score is the mean of member scores; the label is the majority
    vote with ties going to compensatory (0). The final partial window is
    kept, so a trial emits ceil(n / window_size) windows.
    """
    if window_size < 1:
        raise ContractError("window_size must be at least 1")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ContractError("scores and labels must align")
    out = []
    for start in range(0, len(scores), window_size):
        chunk_scores = scores[start : start + window_size]
        chunk_labels = labels[start : start + window_size]
        normal = int((chunk_labels == 1).sum())
        label = 1 if normal > len(chunk_labels) - normal else 0
        out.append((float(chunk_scores.mean()), label))
    return out


def windows_over_pool(pool: PooledScoreSet, window_size: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Window every trial's selected frames; windows never span trials."""
    by_trial: dict[str, list[ScoreEntry]] = {}
    for e in pool.entries:
        by_trial.setdefault(e.trial_id, []).append(e)
    w_scores: list[float] = []
    w_labels: list[int] = []
    for entries in by_trial.values():
        entries = sorted(entries, key=lambda e: e.frame_index)
        scores = np.array([e.normalized_score for e in entries])
        labels = np.array([e.frame_label for e in entries], dtype=np.int64)
        for s, l in window_aggregate(scores, labels, window_size):
            w_scores.append(s)
            w_labels.append(l)
    return np.array(w_scores), np.array(w_labels, dtype=np.int64)


def importance_matrix(sal: SaliencyMatrix) -> np.ndarray:
    """Absolute gradients min-max normalized over the whole matrix."""
    mag = np.abs(sal.values)
    lo, hi = float(mag.min()), float(mag.max())
    if hi > lo:
        return (mag - lo) / (hi - lo)
    return np.zeros_like(mag)


def export_heatmap(matrix: np.ndarray, path, feature_names: Sequence[str]) -> None:
    """Write a frames x features grid as CSV with a frame-index column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(feature_names):
        raise ContractError(
            f"matrix shape {matrix.shape} does not match "
            f"{len(feature_names)} feature names"
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", *feature_names])
        for t in range(matrix.shape[0]):
            writer.writerow([t, *(repr(float(v)) for v in matrix[t])])


def load_heatmap(path) -> np.ndarray:
    """Read a heatmap CSV back into an array (inverse of export_heatmap)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        width = len(header) - 1
        rows = []
        for row in reader:
            if len(row) != width + 1:
                raise DataValidationError(f"{path}: ragged heatmap row")
            rows.append([float(v) for v in row[1:]])
    return np.array(rows)


_SCORE_COLUMNS = (
    "trial_id",
    "frame_index",
    "raw_score",
    "normalized_score",
    "frame_label",
    "padded",
)


def write_raw_scores(path, ftrials: Sequence[FeatureTrial],
                     tracks: Sequence[FrameScoreTrack]) -> None:
    """One row per (trial, frame); normalized_score left empty."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SCORE_COLUMNS)
        for ft, track in zip(ftrials, tracks):
            for t in range(track.frame_count):
                writer.writerow(
                    [
                        ft.trial_id,
                        t,
                        repr(float(track.raw_scores[t])),
                        "",
                        int(ft.frame_labels[t]),
                        int(track.padded_mask[t]),
                    ]
                )


def write_pooled_scores(path, pool: PooledScoreSet) -> None:
    """Pooled entries with their normalized scores filled in."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SCORE_COLUMNS)
        for e in pool.entries:
            writer.writerow(
                [
                    e.trial_id,
                    e.frame_index,
                    repr(e.raw_score),
                    repr(e.normalized_score),
                    e.frame_label,
                    int(e.padded),
                ]
            )


def read_raw_scores(path) -> dict[str, dict[str, np.ndarray]]:
    """Read a raw score file into per-trial arrays, preserving trial order."""
    per_trial: dict[str, dict[str, list]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != _SCORE_COLUMNS:
            raise DataValidationError(f"{path}: unexpected score file header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_SCORE_COLUMNS):
                raise DataValidationError(f"{path}:{lineno}: ragged score row")
            rec = per_trial.setdefault(
                row[0], {"frame_index": [], "raw": [], "label": [], "padded": []}
            )
            try:
                rec["frame_index"].append(int(row[1]))
                rec["raw"].append(float(row[2]))
                rec["label"].append(int(row[4]))
                rec["padded"].append(bool(int(row[5])))
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from exc
    out: dict[str, dict[str, np.ndarray]] = {}
    for trial_id, rec in per_trial.items():
        order = np.argsort(rec["frame_index"])
        expected = np.arange(len(order))
        if np.any(np.asarray(rec["frame_index"])[order] != expected):
            raise DataValidationError(
                f"{path}: trial {trial_id!r} has missing or duplicate frames"
            )
        out[trial_id] = {
            "raw": np.asarray(rec["raw"])[order],
            "label": np.asarray(rec["label"], dtype=np.int64)[order],
            "padded": np.asarray(rec["padded"], dtype=bool)[order],
        }
    return out
