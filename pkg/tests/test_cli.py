import json

import pytest

from framescore.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def make_dataset(tmp_path, name="data.jsonl", seed=5, patients=3, trials=2,
                 extra=()):
    path = tmp_path / name
    code = run(
        "synth", "--out", path, "--seed", seed,
        "--patient-count", patients,
        "--trials-per-patient-per-side", trials,
        "--length-range", 20, 30,
        "--t-max", 40,
        "--comp-prob-affected", 1.0,
        *extra,
    )
    assert code == 0
    return path


def write_grid(tmp_path, hidden=((4,),), rates=(0.001,)):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(
        {"hidden_layers": [list(h) for h in hidden], "learning_rates": list(rates)}
    ))
    return path


def train_small(tmp_path, data, epochs=3):
    model = tmp_path / "model.json"
    code = run(
        "train", "--data", data, "--out", model, "--split", 0.5,
        "--seed", 0, "--grid", write_grid(tmp_path), "--epochs", epochs,
        "--batch-size", 4,
    )
    assert code == 0
    return model


class TestSynthCommand:
    def test_default_run_reports_300_trials(self, tmp_path, capsys):
        out = tmp_path / "full.jsonl"
        assert run("synth", "--out", out, "--seed", 42) == 0
        stdout = capsys.readouterr().out
        assert "300 trials" in stdout
        assert out.exists()

    def test_same_seed_identical_files(self, tmp_path):
        a = make_dataset(tmp_path, "a.jsonl", seed=7)
        b = make_dataset(tmp_path, "b.jsonl", seed=7)
        assert a.read_bytes() == b.read_bytes()

    def test_zero_trials_config_rejected(self, tmp_path, capsys):
        out = tmp_path / "bad.jsonl"
        code = run("synth", "--out", out, "--trials-per-patient-per-side", 0)
        assert code == 2
        assert not out.exists()
        assert "error" in capsys.readouterr().err

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        config = tmp_path / "synth.json"
        config.write_text(json.dumps({
            "patient_count": 2, "trials_per_patient_per_side": 2,
            "length_range": [20, 30], "t_max": 40, "seed": 3,
        }))
        out = tmp_path / "cfg.jsonl"
        assert run("synth", "--out", out, "--config", config,
                   "--patient-count", 1) == 0
        assert "4 trials" in capsys.readouterr().out

    def test_invalid_config_file(self, tmp_path):
        config = tmp_path / "synth.json"
        config.write_text("{broken")
        assert run("synth", "--out", tmp_path / "x.jsonl",
                   "--config", config) == 2


class TestTrainCommand:
    def test_writes_checkpoint_and_grid_report(self, tmp_path, capsys):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        assert model.exists()
        assert (tmp_path / "model.json.grid.csv").exists()
        stdout = capsys.readouterr().out
        assert "6 train / 6 test" in stdout
        assert "test accuracy" in stdout

    def test_default_grid_has_eight_cells(self, tmp_path):
        data = make_dataset(tmp_path)
        model = tmp_path / "model8.json"
        report = tmp_path / "grid8.csv"
        code = run(
            "train", "--data", data, "--out", model, "--split", 0.5,
            "--seed", 0, "--epochs", 1, "--batch-size", 4,
            "--grid-report", report,
        )
        assert code == 0
        lines = [l for l in report.read_text().splitlines()[1:]
                 if l and not l.startswith("#")]
        assert len(lines) == 8
        assert sum(l.rstrip().endswith(",1") for l in lines) == 1

    def test_missing_data_file(self, tmp_path):
        assert run("train", "--data", tmp_path / "nope.jsonl",
                   "--out", tmp_path / "m.json") == 2

    def test_invalid_split(self, tmp_path):
        data = make_dataset(tmp_path)
        assert run("train", "--data", data, "--out", tmp_path / "m.json",
                   "--split", 1.5) == 2


class TestExplainCommand:
    def test_scores_cover_every_frame_slot(self, tmp_path):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        scores = tmp_path / "scores.csv"
        assert run("explain", "--model", model, "--data", data,
                   "--out", scores) == 0
        lines = scores.read_text().splitlines()
        assert len(lines) == 1 + 12 * 40  # header + trials x t_max

    def test_heatmap_grid_shape(self, tmp_path):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        heat = tmp_path / "heat.csv"
        assert run("explain", "--model", model, "--data", data,
                   "--out", tmp_path / "scores.csv",
                   "--heatmap", "P00-affected-00",
                   "--heatmap-out", heat) == 0
        lines = heat.read_text().splitlines()
        assert len(lines) == 41  # t_max + header
        assert all(len(l.split(",")) == 17 for l in lines)

    def test_unknown_heatmap_trial(self, tmp_path):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        out = tmp_path / "s.csv"
        assert run("explain", "--model", model, "--data", data, "--out", out,
                   "--heatmap", "nope") == 2
        assert not out.exists()

    def test_shape_mismatch_rejected(self, tmp_path):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        other = make_dataset(tmp_path, "other.jsonl", extra=("--t-max", "50"))
        out = tmp_path / "s.csv"
        assert run("explain", "--model", model, "--data", other,
                   "--out", out) == 2
        assert not out.exists()


class TestSweepCommand:
    @pytest.fixture
    def prepared(self, tmp_path):
        data = make_dataset(tmp_path)
        model = train_small(tmp_path, data)
        scores = tmp_path / "scores.csv"
        assert run("explain", "--model", model, "--data", data,
                   "--out", scores) == 0
        return data, scores

    def test_full_matrix_outputs(self, prepared, tmp_path, capsys):
        data, scores = prepared
        out = tmp_path / "reports"
        assert run("sweep", "--scores", scores, "--data", data,
                   "--out", out) == 0
        reports = sorted(p.name for p in out.glob("report-*.csv"))
        assert len(reports) == 15
        assert (out / "summary.csv").exists()
        for mode in ("all", "no-pad", "comp-no-pad"):
            assert (out / f"hist-{mode}.csv").exists()
            assert (out / f"pooled-scores-{mode}.csv").exists()
        stdout = capsys.readouterr().out
        assert "beta 2.0" in stdout
        assert "comp-no-pad" in stdout

    def test_beta_recorded_in_report_rows(self, prepared, tmp_path):
        data, scores = prepared
        out = tmp_path / "reports-beta"
        assert run("sweep", "--scores", scores, "--data", data, "--out", out,
                   "--beta", 2, "--windows", "1") == 0
        body = (out / "report-all-w1.csv").read_text().splitlines()
        assert body[1].split(",")[2] == "2.0"

    def test_coarse_step_grid(self, prepared, tmp_path):
        data, scores = prepared
        out = tmp_path / "reports-step"
        assert run("sweep", "--scores", scores, "--data", data, "--out", out,
                   "--step", 0.5, "--windows", "1", "--modes", "all") == 0
        rows = (out / "report-all-w1.csv").read_text().splitlines()
        taus = [r.split(",")[3] for r in rows[1:] if r.startswith("all,")]
        assert taus == ["0.0", "0.5", "1.0"]

    def test_empty_mode_skipped_with_warning(self, tmp_path, capsys):
        data = make_dataset(tmp_path, "nocomp.jsonl",
                            extra=("--comp-prob-affected", "0.0"))
        model = train_small(tmp_path, data)
        scores = tmp_path / "scores.csv"
        assert run("explain", "--model", model, "--data", data,
                   "--out", scores) == 0
        out = tmp_path / "reports-skip"
        capsys.readouterr()
        assert run("sweep", "--scores", scores, "--data", data, "--out", out,
                   "--windows", "1") == 0
        captured = capsys.readouterr()
        assert "skipping mode 'comp-no-pad'" in captured.err
        assert not (out / "report-comp-no-pad-w1.csv").exists()
        assert (out / "report-all-w1.csv").exists()

    def test_score_dataset_mismatch(self, prepared, tmp_path):
        data, scores = prepared
        other = make_dataset(tmp_path, "other2.jsonl", seed=99)
        assert run("sweep", "--scores", scores, "--data", other,
                   "--out", tmp_path / "r") == 2

    def test_bad_mode_name(self, prepared, tmp_path):
        data, scores = prepared
        assert run("sweep", "--scores", scores, "--data", data,
                   "--out", tmp_path / "r", "--modes", "everything") == 2


class TestUsageAndHelp:
    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("synth", "--help")
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "--seed" in text
        assert "--patient-count" in text
        assert "default" in text

    def test_every_command_has_help(self, capsys):
        for command in ("synth", "train", "explain", "sweep"):
            with pytest.raises(SystemExit) as exc:
                run(command, "--help")
            assert exc.value.code == 0
            assert "--help" in capsys.readouterr().out

    def test_unknown_command_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 1

    def test_missing_required_flag_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("synth")
        assert exc.value.code == 1
