"""Batch pipeline driver: synthesize, train, explain, sweep.

Exit codes: 0 success, 1 usage error, 2 data or configuration validation
error, 3 numeric failure during training. Commands validate their inputs
before writing any output file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data, evaluation, network, saliency, synth
from .errors import ContractError, DataValidationError, NumericFailure

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="framescore",
        description=(
            "Localize salient frames in motion time series from weak "
            "trial-level labels via input-gradient saliency."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "synth", formatter_class=fmt,
        help="generate a labelled synthetic dataset",
    )
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--config", default=None, help="JSON file of generator fields")
    p.add_argument("--seed", type=int, default=None,
                   help="override the generator seed")
    p.add_argument("--patient-count", type=int, default=None)
    p.add_argument("--trials-per-patient-per-side", type=int, default=None)
    p.add_argument("--length-range", type=int, nargs=2, default=None,
                   metavar=("MIN", "MAX"))
    p.add_argument("--comp-prob-affected", type=float, default=None,
                   dest="compensation_probability_affected")
    p.add_argument("--comp-prob-unaffected", type=float, default=None,
                   dest="compensation_probability_unaffected")
    p.add_argument("--coverage-range", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"),
                   dest="compensation_coverage_range")
    p.add_argument("--comp-amplitude", type=float, default=None,
                   dest="compensation_amplitude")
    p.add_argument("--motion-amplitude", type=float, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--t-max", type=int, default=None)

    p = sub.add_parser(
        "train", formatter_class=fmt,
        help="featurize, split, grid-search, and train the classifier",
    )
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--split", type=float, default=0.8,
                   help="training fraction of the trial-level split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", default=None,
                   help="JSON grid file with hidden_layers and learning_rates")
    p.add_argument("--grid-report", default=None,
                   help="grid report CSV path (default: <out>.grid.csv)")
    p.add_argument("--folds", type=int, default=3,
                   help="cross-validation folds for the grid search")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=1e-3,
                   help="learning rate for the final fit (grid may override)")
    p.add_argument("--momentum", type=float, default=0.9)

    p = sub.add_parser(
        "explain", formatter_class=fmt,
        help="compute per-frame saliency scores for every trial",
    )
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="raw score CSV path")
    p.add_argument("--heatmap", default=None, metavar="TRIAL_ID",
                   help="also export a normalized importance grid for a trial")
    p.add_argument("--heatmap-out", default=None,
                   help="heatmap path (default: <out dir>/heatmap-<trial>.csv)")

    p = sub.add_parser(
        "sweep", formatter_class=fmt,
        help="threshold sweeps over filter modes and window sizes",
    )
    p.add_argument("--scores", required=True, help="raw score CSV from explain")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--modes", default="all,no-pad,comp-no-pad",
                   help="comma-separated filter modes")
    p.add_argument("--windows", default="1,5,10,15,20",
                   help="comma-separated window sizes")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.01)
    return parser


def _load_dataset(path) -> data.DatasetManifest:
    if not os.path.exists(path):
        raise DataValidationError(f"dataset file not found: {path}")
    return data.load_dataset(path)


def _cmd_synth(args) -> int:
    config = synth.SynthConfig() if args.config is None else \
        synth.load_synth_config(args.config)
    config = synth.with_overrides(
        config,
        patient_count=args.patient_count,
        trials_per_patient_per_side=args.trials_per_patient_per_side,
        length_range=tuple(args.length_range) if args.length_range else None,
        compensation_probability_affected=args.compensation_probability_affected,
        compensation_probability_unaffected=args.compensation_probability_unaffected,
        compensation_coverage_range=(
            tuple(args.compensation_coverage_range)
            if args.compensation_coverage_range else None
        ),
        compensation_amplitude=args.compensation_amplitude,
        motion_amplitude=args.motion_amplitude,
        noise_std=args.noise_std,
        t_max=args.t_max,
        seed=args.seed,
    )
    manifest = synth.generate_dataset(config)
    data.save_dataset(manifest, args.out)

    labels = np.concatenate([t.frame_labels for t in manifest.trials])
    unpadded = len(labels)
    comp = int((labels == data.LABEL_COMPENSATORY).sum())
    comp_trials = sum(
        1 for t in manifest.trials if t.trial_label == data.LABEL_COMPENSATORY
    )
    padded_slots = len(manifest) * manifest.t_max - unpadded
    print(
        f"{len(manifest)} trials ({comp_trials} compensatory), "
        f"{unpadded} frames ({comp} compensatory, {unpadded - comp} normal), "
        f"{padded_slots} padded slots, t_max {manifest.t_max}, "
        f"seed {config.seed} -> {args.out}"
    )
    return EXIT_OK


def _parse_grid(path, base_config: network.TrainConfig):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise DataValidationError(f"grid file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or \
            not {"hidden_layers", "learning_rates"} <= set(obj):
        raise DataValidationError(
            f"{path}: grid file needs 'hidden_layers' and 'learning_rates'"
        )
    return obj["hidden_layers"], obj["learning_rates"], base_config


def _write_grid_report(result: network.GridSearchResult, path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["hidden_layers", "learning_rate", "mean_val_accuracy",
             "fold_accuracies", "parameters", "selected"]
        )
        for i, cell in enumerate(result.cells):
            writer.writerow(
                [
                    "x".join(str(w) for w in cell.architecture.hidden_layers),
                    repr(cell.config.learning_rate),
                    repr(cell.mean_val_accuracy),
                    ";".join(repr(a) for a in cell.fold_accuracies),
                    cell.architecture.parameter_count,
                    int(i == result.best_index),
                ]
            )
        for note in result.warnings:
            writer.writerow([f"# warning: {note}"])


def _cmd_train(args) -> int:
    if not 0.0 < args.split < 1.0:
        raise DataValidationError(f"--split must be in (0, 1), got {args.split}")
    manifest = _load_dataset(args.data)
    train_set, test_set = data.split_dataset(manifest, args.split, args.seed)
    print(f"{len(train_set)} train / {len(test_set)} test trials "
          f"(split {args.split}, seed {args.seed})")

    def flatten(m: data.DatasetManifest):
        ftrials = data.featurize(m)
        X = np.stack([ft.features.ravel() for ft in ftrials])
        y = np.array([ft.trial_label for ft in ftrials], dtype=np.float64)
        return X, y

    X_train, y_train = flatten(train_set)
    X_test, y_test = flatten(test_set)
    input_dim = X_train.shape[1]

    base_config = network.TrainConfig(
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=min(args.batch_size, len(train_set)),
        seed=args.seed,
    )
    if args.grid is None:
        grid = network.build_grid(input_dim, base_config=base_config)
    else:
        hidden, rates, base = _parse_grid(args.grid, base_config)
        grid = network.build_grid(input_dim, hidden, rates, base)

    result = network.grid_search(X_train, y_train, grid,
                                 folds=args.folds, seed=args.seed)
    best = result.best
    hidden = "x".join(str(w) for w in best.architecture.hidden_layers)
    print(f"grid search: {len(result.cells)} cells, best hidden [{hidden}] "
          f"lr {best.config.learning_rate} "
          f"(mean val accuracy {best.mean_val_accuracy:.4f})")

    model = network.train(X_train, y_train, best.architecture, best.config)
    model.metadata["test_accuracy"] = network.evaluate_accuracy(
        model, X_test, y_test
    )
    model.metadata["train_trials"] = len(train_set)
    model.metadata["test_trials"] = len(test_set)
    model.metadata["split"] = args.split
    model.metadata["t_max"] = manifest.t_max
    model.metadata["feature_count"] = manifest.layout.feature_count

    network.save_model(model, args.out)
    grid_report = args.grid_report or f"{args.out}.grid.csv"
    _write_grid_report(result, grid_report)
    print(
        f"train accuracy {model.metadata['train_accuracy']:.4f}, "
        f"test accuracy {model.metadata['test_accuracy']:.4f} -> {args.out}"
    )
    return EXIT_OK


def _cmd_explain(args) -> int:
    if not os.path.exists(args.model):
        raise DataValidationError(f"model checkpoint not found: {args.model}")
    model = network.load_model(args.model)
    manifest = _load_dataset(args.data)
    input_dim = manifest.t_max * manifest.layout.feature_count
    if model.architecture.input_dim != input_dim:
        raise DataValidationError(
            f"model input_dim {model.architecture.input_dim} does not match "
            f"dataset t_max x features = {input_dim}"
        )
    ftrials = data.featurize(manifest)
    heatmap_ft = None
    if args.heatmap is not None:
        matches = [ft for ft in ftrials if ft.trial_id == args.heatmap]
        if not matches:
            raise DataValidationError(f"trial {args.heatmap!r} not in dataset")
        heatmap_ft = matches[0]

    tracks = saliency.compute_tracks(model, ftrials)
    saliency.write_raw_scores(args.out, ftrials, tracks)
    print(f"{len(tracks)} trials x {manifest.t_max} frames -> {args.out}")

    if heatmap_ft is not None:
        grid = saliency.importance_matrix(
            saliency.compute_saliency(model, heatmap_ft)
        )
        out = args.heatmap_out or os.path.join(
            os.path.dirname(os.path.abspath(args.out)),
            f"heatmap-{args.heatmap}.csv",
        )
        saliency.export_heatmap(grid, out, manifest.layout.feature_names())
        print(f"heatmap for {args.heatmap} -> {out}")
    return EXIT_OK


def _rebuild_tracks(manifest, ftrials, scores_by_trial):
    """Validate a raw score file against the dataset and rebuild tracks."""
    missing = [ft.trial_id for ft in ftrials if ft.trial_id not in scores_by_trial]
    if missing:
        raise DataValidationError(
            f"score file lacks trials: {missing[:3]}{'...' if len(missing) > 3 else ''}"
        )
    extra = set(scores_by_trial) - {ft.trial_id for ft in ftrials}
    if extra:
        raise DataValidationError(
            f"score file has unknown trials: {sorted(extra)[:3]}"
        )
    tracks = []
    for ft in ftrials:
        rec = scores_by_trial[ft.trial_id]
        if len(rec["raw"]) != ft.frame_count:
            raise DataValidationError(
                f"trial {ft.trial_id!r}: score file has {len(rec['raw'])} frames, "
                f"dataset has {ft.frame_count}"
            )
        if np.any(rec["label"] != ft.frame_labels):
            raise DataValidationError(
                f"trial {ft.trial_id!r}: score file labels disagree with dataset"
            )
        if np.any(rec["padded"] != ft.padded_mask):
            raise DataValidationError(
                f"trial {ft.trial_id!r}: score file padding disagrees with dataset"
            )
        tracks.append(
            saliency.FrameScoreTrack(
                trial_id=ft.trial_id,
                raw_scores=rec["raw"],
                padded_mask=rec["padded"],
            )
        )
    return tracks


def _cmd_sweep(args) -> int:
    try:
        modes = [evaluation.FilterMode.parse(m.strip())
                 for m in args.modes.split(",") if m.strip()]
        windows = [int(w) for w in args.windows.split(",") if w.strip()]
    except (ContractError, ValueError) as exc:
        raise DataValidationError(str(exc)) from exc
    if not modes or not windows:
        raise DataValidationError("need at least one mode and one window size")
    if any(w < 1 for w in windows):
        raise DataValidationError("window sizes must be at least 1")
    if args.beta <= 0:
        raise DataValidationError("--beta must be positive")
    if not 0.0 < args.step <= 1.0:
        raise DataValidationError("--step must be in (0, 1]")
    if not os.path.exists(args.scores):
        raise DataValidationError(f"score file not found: {args.scores}")

    manifest = _load_dataset(args.data)
    ftrials = data.featurize(manifest)
    scores_by_trial = saliency.read_raw_scores(args.scores)
    tracks = _rebuild_tracks(manifest, ftrials, scores_by_trial)

    usable = []
    for mode in modes:
        try:
            evaluation.select_frames(ftrials, tracks, mode)
        except ContractError as exc:
            _warn(f"skipping mode {mode.value!r}: {exc}")
            continue
        usable.append(mode)
    if not usable:
        _warn("no usable filter modes; nothing to report")
        return EXIT_OK

    matrix = evaluation.run_experiment_matrix(
        ftrials, tracks, usable, windows, beta=args.beta, step=args.step
    )
    os.makedirs(args.out, exist_ok=True)
    for res in matrix.results:
        saliency.write_pooled_scores(
            os.path.join(args.out, f"pooled-scores-{res.mode.value}.csv"),
            res.pool,
        )
        evaluation.write_histogram(
            res.histogram, os.path.join(args.out, f"hist-{res.mode.value}.csv")
        )
        for report in res.reports:
            evaluation.write_sweep_report(
                report,
                os.path.join(
                    args.out,
                    f"report-{res.mode.value}-w{report.window_size}.csv",
                ),
            )
    evaluation.write_summary(matrix, os.path.join(args.out, "summary.csv"))
    print(f"beta {args.beta}, step {args.step}")
    print(evaluation.format_pool_table(matrix))
    print()
    print(evaluation.format_summary(matrix))
    print(f"reports -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "explain": _cmd_explain,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataValidationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
