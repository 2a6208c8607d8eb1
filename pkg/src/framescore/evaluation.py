"""Filter modes, confusion metrics, F-beta threshold sweeps, and reports.

The positive class throughout is compensatory (frame label 0): a frame or
window is predicted compensatory when its normalized score exceeds the
threshold. Sweeps evaluate a uniform threshold grid over [0, 1] and report
the row maximizing F-beta, ties resolved toward the smallest threshold.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LABEL_COMPENSATORY, LABEL_NORMAL, FeatureTrial
from .errors import ContractError
from .saliency import (
    FrameScoreTrack,
    PooledScoreSet,
    ScoreEntry,
    normalize_pool,
    windows_over_pool,
)

DEFAULT_BETA = 2.0
DEFAULT_STEP = 0.01
DEFAULT_WINDOWS = (1, 5, 10, 15, 20)
HISTOGRAM_BINS = 50


class FilterMode(enum.Enum):
    """Frame-selection regimes for pooling scores."""

    ALL = "all"
    NO_PAD = "no-pad"
    COMP_NO_PAD = "comp-no-pad"

    @classmethod
    def parse(cls, text: str) -> "FilterMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ContractError(
            f"unknown filter mode {text!r}; expected one of "
            f"{[m.value for m in cls]}"
        )


def select_frames(
    ftrials: Sequence[FeatureTrial],
    tracks: Sequence[FrameScoreTrack],
    mode: FilterMode,
) -> list[ScoreEntry]:
    """Return the un-normalized frame entries admitted by the mode."""
    if len(ftrials) != len(tracks):
        raise ContractError(
            f"{len(tracks)} tracks do not cover {len(ftrials)} trials"
        )
    entries: list[ScoreEntry] = []
    any_comp = False
    for ft, track in zip(ftrials, tracks):
        if ft.trial_id != track.trial_id:
            raise ContractError(
                f"track {track.trial_id!r} does not match trial {ft.trial_id!r}"
            )
        if track.frame_count != ft.frame_count:
            raise ContractError(
                f"trial {ft.trial_id!r}: track has {track.frame_count} frames, "
                f"trial has {ft.frame_count}"
            )
        if ft.trial_label == LABEL_COMPENSATORY:
            any_comp = True
        elif mode is FilterMode.COMP_NO_PAD:
            continue
        limit = ft.frame_count if mode is FilterMode.ALL else ft.original_length
        for t in range(limit):
            entries.append(
                ScoreEntry(
                    trial_id=ft.trial_id,
                    frame_index=t,
                    raw_score=float(track.raw_scores[t]),
                    frame_label=int(ft.frame_labels[t]),
                    padded=t >= ft.original_length,
                )
            )
    if mode is FilterMode.COMP_NO_PAD and not any_comp:
        raise ContractError(
            "comp-no-pad selection is empty: no compensatory trials"
        )
    return entries


def classify(score: float, tau: float) -> int:
    """Compensatory (0) when score exceeds tau, else normal (1)."""
    return LABEL_COMPENSATORY if score > tau else LABEL_NORMAL


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with compensatory as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_at(scores: np.ndarray, labels: np.ndarray, tau: float
                 ) -> ConfusionCounts:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    predicted_comp = scores > tau
    actual_comp = labels == LABEL_COMPENSATORY
    return ConfusionCounts(
        tp=int(np.sum(predicted_comp & actual_comp)),
        fp=int(np.sum(predicted_comp & ~actual_comp)),
        tn=int(np.sum(~predicted_comp & ~actual_comp)),
        fn=int(np.sum(~predicted_comp & actual_comp)),
    )


def precision(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fp
    return counts.tp / denom if denom else 0.0


def recall(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fn
    return counts.tp / denom if denom else 0.0


def fbeta(counts: ConfusionCounts, beta: float) -> float:
    """(1 + b^2) P R / (b^2 P + R), zero when both P and R are zero."""
    if beta <= 0:
        raise ContractError("beta must be positive")
    p = precision(counts)
    r = recall(counts)
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * p * r / (b2 * p + r)


def threshold_grid(step: float) -> list[float]:
    """{0, step, 2 step, ...} capped and completed with 1."""
    if not 0.0 < step <= 1.0:
        raise ContractError("step must be in (0, 1]")
    taus = []
    i = 0
    while True:
        tau = round(i * step, 12)
        if tau > 1.0:
            break
        taus.append(tau)
        i += 1
    if taus[-1] != 1.0:
        taus.append(1.0)
    return taus


@dataclass(frozen=True)
class SweepRow:
    tau: float
    counts: ConfusionCounts
    precision: float
    recall: float
    fbeta: float


@dataclass(frozen=True)
class ThresholdSweepReport:
    mode: FilterMode
    window_size: int
    beta: float
    step: float
    rows: tuple[SweepRow, ...]
    best_index: int
    group0: int
    group1: int

    @property
    def best(self) -> SweepRow:
        return self.rows[self.best_index]

    @property
    def best_tau(self) -> float:
        return self.best.tau

    @property
    def best_recall(self) -> float:
        return self.best.recall

    @property
    def best_fbeta(self) -> float:
        return self.best.fbeta

    @property
    def total(self) -> int:
        return self.group0 + self.group1

    @property
    def group0_fraction(self) -> float:
        return self.group0 / self.total if self.total else 0.0

    @property
    def group1_fraction(self) -> float:
        return self.group1 / self.total if self.total else 0.0


def sweep(
    scores: np.ndarray,
    labels: np.ndarray,
    beta: float = DEFAULT_BETA,
    step: float = DEFAULT_STEP,
    mode: FilterMode = FilterMode.ALL,
    window_size: int = 1,
) -> ThresholdSweepReport:
    """Evaluate every threshold on the grid; best row maximizes F-beta."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(scores) == 0:
        raise ContractError("cannot sweep an empty pool")
    if scores.shape != labels.shape:
        raise ContractError("scores and labels must align")
    rows = []
    best_index = 0
    best_score = -1.0
    for tau in threshold_grid(step):
        counts = confusion_at(scores, labels, tau)
        row = SweepRow(
            tau=tau,
            counts=counts,
            precision=precision(counts),
            recall=recall(counts),
            fbeta=fbeta(counts, beta),
        )
        if row.fbeta > best_score:
            best_score = row.fbeta
            best_index = len(rows)
        rows.append(row)
    return ThresholdSweepReport(
        mode=mode,
        window_size=window_size,
        beta=beta,
        step=step,
        rows=tuple(rows),
        best_index=best_index,
        group0=int(np.sum(labels == LABEL_COMPENSATORY)),
        group1=int(np.sum(labels == LABEL_NORMAL)),
    )


@dataclass(frozen=True)
class ScoreHistogram:
    """Per-group score histograms over [0, 1] plus their overlap mass."""

    bin_edges: np.ndarray
    counts0: np.ndarray
    counts1: np.ndarray

    @property
    def overlap_mass(self) -> int:
        return int(np.minimum(self.counts0, self.counts1).sum())


def histogram(pool: PooledScoreSet, bins: int = HISTOGRAM_BINS) -> ScoreHistogram:
    """Bin normalized scores by their frame label group."""
    if not pool.entries:
        raise ContractError("cannot histogram an empty pool")
    edges = np.linspace(0.0, 1.0, bins + 1)
    scores = pool.scores()
    labels = pool.labels()
    counts0, _ = np.histogram(scores[labels == LABEL_COMPENSATORY], bins=edges)
    counts1, _ = np.histogram(scores[labels == LABEL_NORMAL], bins=edges)
    return ScoreHistogram(edges, counts0, counts1)


@dataclass(frozen=True)
class ModeResult:
    mode: FilterMode
    pool: PooledScoreSet
    histogram: ScoreHistogram
    reports: tuple[ThresholdSweepReport, ...]


@dataclass(frozen=True)
class ExperimentMatrix:
    """One sweep report per (mode, window size), plus per-mode pools."""

    results: tuple[ModeResult, ...]

    @property
    def reports(self) -> list[ThresholdSweepReport]:
        return [r for res in self.results for r in res.reports]

    def report_for(self, mode: FilterMode, window_size: int
                   ) -> ThresholdSweepReport:
        for res in self.results:
            for report in res.reports:
                if res.mode is mode and report.window_size == window_size:
                    return report
        raise KeyError((mode, window_size))


def run_experiment_matrix(
    ftrials: Sequence[FeatureTrial],
    tracks: Sequence[FrameScoreTrack],
    modes: Sequence[FilterMode] = tuple(FilterMode),
    windows: Sequence[int] = DEFAULT_WINDOWS,
    beta: float = DEFAULT_BETA,
    step: float = DEFAULT_STEP,
) -> ExperimentMatrix:
    """Select, normalize, window, and sweep for every (mode, window) cell."""
    results = []
    for mode in modes:
        pool = normalize_pool(select_frames(ftrials, tracks, mode))
        reports = []
        for w in windows:
            if w == 1:
                scores, labels = pool.scores(), pool.labels()
            else:
                scores, labels = windows_over_pool(pool, w)
            reports.append(
                sweep(scores, labels, beta=beta, step=step, mode=mode,
                      window_size=w)
            )
        results.append(
            ModeResult(mode, pool, histogram(pool), tuple(reports))
        )
    return ExperimentMatrix(tuple(results))


def expected_window_count(selected_per_trial: Sequence[int], window_size: int
                          ) -> int:
    return sum(math.ceil(n / window_size) for n in selected_per_trial if n)


def write_sweep_report(report: ThresholdSweepReport, path) -> None:
    """One row per threshold plus a best-row summary block."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "window", "beta", "tau", "tp", "fp", "tn", "fn",
             "precision", "recall", "fbeta"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    report.mode.value,
                    report.window_size,
                    repr(report.beta),
                    repr(row.tau),
                    row.counts.tp,
                    row.counts.fp,
                    row.counts.tn,
                    row.counts.fn,
                    repr(row.precision),
                    repr(row.recall),
                    repr(row.fbeta),
                ]
            )
        writer.writerow([])
        writer.writerow(["# best", "tau", "recall", "fbeta", "group0", "group1"])
        writer.writerow(
            ["# best",
             repr(report.best_tau),
             repr(report.best_recall),
             repr(report.best_fbeta),
             report.group0,
             report.group1]
        )


def write_histogram(hist: ScoreHistogram, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_group0", "count_group1"])
        for i in range(len(hist.counts0)):
            writer.writerow(
                [repr(float(hist.bin_edges[i])),
                 repr(float(hist.bin_edges[i + 1])),
                 int(hist.counts0[i]),
                 int(hist.counts1[i])]
            )
        writer.writerow(["# overlap_mass", hist.overlap_mass, "", ""])


def format_summary(matrix: ExperimentMatrix) -> str:
    """Human-readable best-row table per (mode, window) cell."""
    lines = [
        f"{'mode':<14} {'window':>6} {'best_tau':>9} {'recall':>7} "
        f"{'fbeta':>7} {'group0':>8} {'group1':>8}"
    ]
    for res in matrix.results:
        for report in res.reports:
            lines.append(
                f"{report.mode.value:<14} {report.window_size:>6} "
                f"{report.best_tau:>9.2f} {report.best_recall:>7.3f} "
                f"{report.best_fbeta:>7.3f} {report.group0:>8} {report.group1:>8}"
            )
    return "\n".join(lines)


def format_pool_table(matrix: ExperimentMatrix) -> str:
    """Per-pool group sizes and percentages (frame level, one row per mode)."""
    lines = [
        f"{'pool':<14} {'group0':>8} {'pct0':>7} {'group1':>8} {'pct1':>7} "
        f"{'total':>8}"
    ]
    for res in matrix.results:
        labels = res.pool.labels()
        g0 = int(np.sum(labels == LABEL_COMPENSATORY))
        g1 = int(np.sum(labels == LABEL_NORMAL))
        total = g0 + g1
        lines.append(
            f"{res.mode.value:<14} {g0:>8} {g0 / total:>6.1%} "
            f"{g1:>8} {g1 / total:>6.1%} {total:>8}"
        )
    return "\n".join(lines)


def write_summary(matrix: ExperimentMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "window", "best_tau", "best_recall", "best_fbeta",
             "group0", "group1", "total"]
        )
        for res in matrix.results:
            for report in res.reports:
                writer.writerow(
                    [
                        report.mode.value,
                        report.window_size,
                        repr(report.best_tau),
                        repr(report.best_recall),
                        repr(report.best_fbeta),
                        report.group0,
                        report.group1,
                        report.total,
                    ]
                )
