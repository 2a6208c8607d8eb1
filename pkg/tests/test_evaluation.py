import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framescore.data import featurize
from framescore.errors import ContractError
from framescore.evaluation import (
    ConfusionCounts,
    FilterMode,
    classify,
    confusion_at,
    expected_window_count,
    fbeta,
    format_pool_table,
    format_summary,
    histogram,
    precision,
    recall,
    run_experiment_matrix,
    select_frames,
    sweep,
    threshold_grid,
    write_histogram,
    write_summary,
    write_sweep_report,
)
from framescore.saliency import FrameScoreTrack, ScoreEntry, normalize_pool


def tracks_for(ftrials, seed=0):
    rng = np.random.default_rng(seed)
    return [
        FrameScoreTrack(ft.trial_id, rng.uniform(size=ft.frame_count),
                        ft.padded_mask)
        for ft in ftrials
    ]


def pool_of(raws, labels):
    entries = [
        ScoreEntry("t", i, float(r), int(l), False)
        for i, (r, l) in enumerate(zip(raws, labels))
    ]
    return normalize_pool(entries)


class TestClassify:
    def test_boundary_is_normal(self):
        assert classify(0.36, 0.36) == 1

    def test_above_threshold_is_compensatory(self):
        assert classify(0.37, 0.36) == 0

    def test_max_threshold_flags_nothing(self):
        for s in (0.0, 0.5, 1.0):
            assert classify(s, 1.0) == 1


class TestFbeta:
    def test_perfect(self):
        counts = ConfusionCounts(tp=10, fp=0, tn=5, fn=0)
        assert fbeta(counts, 2.0) == 1.0

    def test_hand_value(self):
        # P = 0.5, R = 1 -> F2 = 5 * 0.5 / (4 * 0.5 + 1) = 2.5 / 3
        counts = ConfusionCounts(tp=10, fp=10, tn=0, fn=0)
        assert fbeta(counts, 2.0) == pytest.approx(2.5 / 3.0, rel=1e-12)

    def test_degenerate_conventions(self):
        assert precision(ConfusionCounts(0, 0, 5, 5)) == 0.0
        assert recall(ConfusionCounts(0, 5, 5, 0)) == 0.0
        assert fbeta(ConfusionCounts(0, 0, 5, 0), 2.0) == 0.0

    def test_implied_precision_probe(self):
        # inverting F2 = 0.91 at R = 0.96 gives P ~ 0.753; the formula must
        # reproduce the starting F2 from that pair
        r, f2 = 0.96, 0.91
        p = r * f2 / (5.0 * r - 4.0 * f2)
        assert p == pytest.approx(0.753, abs=2e-3)
        assert 5.0 * p * r / (4.0 * p + r) == pytest.approx(f2, rel=1e-12)

    def test_invalid_beta(self):
        with pytest.raises(ContractError):
            fbeta(ConfusionCounts(1, 1, 1, 1), 0.0)

    @given(
        tp=st.integers(0, 20), fp=st.integers(0, 20),
        tn=st.integers(0, 20), fn=st.integers(0, 20),
        beta=st.sampled_from([0.5, 1.0, 2.0]),
    )
    @settings(max_examples=200, deadline=None)
    def test_harmonic_mean_form(self, tp, fp, tn, fn, beta):
        counts = ConfusionCounts(tp, fp, tn, fn)
        p, r = precision(counts), recall(counts)
        if p > 0 and r > 0:
            harmonic = (1.0 + beta**2) / (beta**2 / r + 1.0 / p)
            assert fbeta(counts, beta) == pytest.approx(harmonic, rel=1e-12)


class TestThresholdGrid:
    def test_default_step(self):
        taus = threshold_grid(0.01)
        assert len(taus) == 101
        assert taus[0] == 0.0
        assert taus[-1] == 1.0
        assert taus[36] == 0.36

    def test_half_step(self):
        assert threshold_grid(0.5) == [0.0, 0.5, 1.0]

    def test_non_divisor_step_completed_with_one(self):
        assert threshold_grid(0.3) == [0.0, 0.3, 0.6, 0.9, 1.0]

    def test_invalid_step(self):
        with pytest.raises(ContractError):
            threshold_grid(0.0)


class TestSelectFrames:
    def test_mode_nesting(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        tracks = tracks_for(ftrials)
        sets = {}
        for mode in FilterMode:
            entries = select_frames(ftrials, tracks, mode)
            sets[mode] = {(e.trial_id, e.frame_index) for e in entries}
        assert sets[FilterMode.COMP_NO_PAD] <= sets[FilterMode.NO_PAD]
        assert sets[FilterMode.NO_PAD] <= sets[FilterMode.ALL]

    def test_all_counts(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        entries = select_frames(ftrials, tracks_for(ftrials), FilterMode.ALL)
        assert len(entries) == len(ftrials) * small_synth_manifest.t_max

    def test_no_pad_counts(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        entries = select_frames(ftrials, tracks_for(ftrials), FilterMode.NO_PAD)
        assert len(entries) == sum(ft.original_length for ft in ftrials)
        assert not any(e.padded for e in entries)

    def test_full_length_trial_identical_under_no_pad(self):
        from tests.conftest import make_trial
        from framescore.data import DatasetManifest

        trial = make_trial("full", length=10)
        manifest = DatasetManifest(trials=(trial,), t_max=10)
        ftrials = featurize(manifest)
        tracks = tracks_for(ftrials)
        all_entries = select_frames(ftrials, tracks, FilterMode.ALL)
        nopad_entries = select_frames(ftrials, tracks, FilterMode.NO_PAD)
        assert [(e.trial_id, e.frame_index) for e in all_entries] == \
            [(e.trial_id, e.frame_index) for e in nopad_entries]

    def test_comp_mode_requires_compensatory_trials(self):
        from tests.conftest import make_trial
        from framescore.data import DatasetManifest

        manifest = DatasetManifest(trials=(make_trial("n", length=6),), t_max=8)
        ftrials = featurize(manifest)
        with pytest.raises(ContractError):
            select_frames(ftrials, tracks_for(ftrials), FilterMode.COMP_NO_PAD)

    def test_track_alignment_checked(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        tracks = tracks_for(ftrials)
        with pytest.raises(ContractError):
            select_frames(ftrials, tracks[:-1], FilterMode.ALL)
        with pytest.raises(ContractError):
            select_frames(ftrials, list(reversed(tracks)), FilterMode.ALL)

    def test_parse_mode(self):
        assert FilterMode.parse("comp-no-pad") is FilterMode.COMP_NO_PAD
        with pytest.raises(ContractError):
            FilterMode.parse("bogus")


class TestSweep:
    def test_perfectly_separated_pool(self):
        # compensatory units score 1, normal units score 0; F2 is 1 from the
        # first grid point on, so the smallest-tau tie-break reports 0
        scores = np.array([1.0] * 5 + [0.0] * 5)
        labels = np.array([0] * 5 + [1] * 5)
        report = sweep(scores, labels)
        assert report.best_fbeta == 1.0
        assert report.best_tau == 0.0
        assert report.best_recall == 1.0

    def test_no_positives(self):
        scores = np.array([0.2, 0.8, 0.5])
        labels = np.array([1, 1, 1])
        report = sweep(scores, labels)
        assert all(row.fbeta == 0.0 for row in report.rows)
        assert report.best_tau == 0.0

    def test_recall_non_increasing_and_totals_constant(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            n = int(rng.integers(10, 200))
            scores = rng.uniform(size=n)
            labels = rng.integers(0, 2, size=n)
            report = sweep(scores, labels, step=0.05)
            recalls = [row.recall for row in report.rows]
            assert all(a >= b - 1e-15 for a, b in zip(recalls, recalls[1:]))
            assert all(row.counts.total == n for row in report.rows)

    def test_endpoint_behavior(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(0.01, 0.99, size=50)
        labels = rng.integers(0, 2, size=50)
        report = sweep(scores, labels)
        top = report.rows[-1]
        assert top.tau == 1.0
        assert top.counts.tp == 0 and top.counts.fp == 0
        bottom = report.rows[0]
        flagged = int((scores > 0).sum())
        assert bottom.counts.tp + bottom.counts.fp == flagged

    def test_rows_cover_grid(self):
        report = sweep(np.array([0.5]), np.array([0]), step=0.25)
        assert [row.tau for row in report.rows] == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_empty_pool_rejected(self):
        with pytest.raises(ContractError):
            sweep(np.array([]), np.array([]))

    def test_group_sizes(self):
        report = sweep(np.array([0.1, 0.9, 0.5]), np.array([0, 1, 0]))
        assert report.group0 == 2
        assert report.group1 == 1
        assert report.total == 3
        assert report.group0_fraction == pytest.approx(2 / 3)
        assert report.group1_fraction == pytest.approx(1 / 3)


class TestHistogram:
    def test_disjoint_groups_no_overlap(self):
        pool = pool_of([0.0] * 10 + [1.0] * 10, [0] * 10 + [1] * 10)
        hist = histogram(pool)
        assert hist.overlap_mass == 0
        assert hist.counts0.sum() == 10
        assert hist.counts1.sum() == 10

    def test_identical_distributions_full_overlap(self):
        raws = list(np.linspace(0, 1, 20))
        pool = pool_of(raws + raws, [0] * 20 + [1] * 20)
        hist = histogram(pool)
        assert hist.overlap_mass == 20

    def test_counts_sum_to_group_sizes(self):
        rng = np.random.default_rng(2)
        raws = rng.uniform(size=100)
        labels = rng.integers(0, 2, size=100)
        hist = histogram(pool_of(raws, labels))
        assert hist.counts0.sum() == int((labels == 0).sum())
        assert hist.counts1.sum() == int((labels == 1).sum())
        assert len(hist.counts0) == 50


class TestExperimentMatrix:
    def test_full_matrix_shape(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        tracks = tracks_for(ftrials)
        matrix = run_experiment_matrix(ftrials, tracks)
        assert len(matrix.reports) == 15
        pairs = {(r.mode, r.window_size) for r in matrix.reports}
        assert len(pairs) == 15
        report = matrix.report_for(FilterMode.ALL, 5)
        assert report.window_size == 5

    def test_window_counts_match_ceil_arithmetic(self, small_synth_manifest):
        ftrials = featurize(small_synth_manifest)
        tracks = tracks_for(ftrials)
        matrix = run_experiment_matrix(
            ftrials, tracks, modes=(FilterMode.NO_PAD,), windows=(5,)
        )
        report = matrix.reports[0]
        expected = expected_window_count(
            [ft.original_length for ft in ftrials], 5
        )
        assert report.total == expected

    def test_writers_produce_files(self, small_synth_manifest, tmp_path):
        ftrials = featurize(small_synth_manifest)
        matrix = run_experiment_matrix(
            ftrials, tracks_for(ftrials), windows=(1, 5)
        )
        write_summary(matrix, tmp_path / "summary.csv")
        write_sweep_report(matrix.reports[0], tmp_path / "report.csv")
        write_histogram(matrix.results[0].histogram, tmp_path / "hist.csv")
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert len(summary) == 1 + 6  # header + 3 modes x 2 windows
        report_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert report_lines[0].startswith("mode,window,beta,tau")
        assert len([l for l in report_lines if l.startswith("all,")]) == 101
        text = format_summary(matrix)
        assert "comp-no-pad" in text
        pool_text = format_pool_table(matrix)
        assert pool_text.count("\n") == 3  # header + one row per mode
        assert "%" in pool_text

    def test_confusion_at_vectorized_agreement(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=200)
        labels = rng.integers(0, 2, size=200)
        counts = confusion_at(scores, labels, 0.4)
        slow = [classify(s, 0.4) for s in scores]
        assert counts.tp == sum(1 for p, l in zip(slow, labels) if p == 0 and l == 0)
        assert counts.fp == sum(1 for p, l in zip(slow, labels) if p == 0 and l == 1)
        assert counts.tn == sum(1 for p, l in zip(slow, labels) if p == 1 and l == 1)
        assert counts.fn == sum(1 for p, l in zip(slow, labels) if p == 1 and l == 0)
        assert counts.total == 200
