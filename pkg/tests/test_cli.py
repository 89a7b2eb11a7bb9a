"""End-to-end runs of the command line workflow in a temp directory."""

import json

import pytest

from cadet.cli import main

# small enough to run the whole pipeline in about a second
TINY = {
    "survey_duration_s": 1500,
    "replicates_per_band": 3,
    "master_seed": 7,
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["gen-survey", "--config", str(cfg),
                 "--out", str(root / "survey.csv")]) == 0
    assert main(["learn", "--survey", str(root / "survey.csv"),
                 "--out", str(root / "model.dat"), "--config", str(cfg)]) == 0
    assert main(["run", "--config", str(cfg), "--model", str(root / "model.dat"),
                 "--out", str(root / "results")]) == 0
    return root, cfg


def test_run_outputs(pipeline):
    root, _ = pipeline
    results = root / "results"
    for name in ("replicates.csv", "pd_table.csv", "locerr.csv"):
        assert (results / name).is_file()
    assert len(list(results.glob("roc_*.csv"))) == 6 * 4
    lines = (results / "replicates.csv").read_text().splitlines()
    assert len(lines) == 1 + 6 * 3 * 4  # header + bands x reps x methods


def test_report_rederives_identical_summaries(pipeline, tmp_path):
    root, _ = pipeline
    results = root / "results"
    assert main(["report", "--in", str(results), "--out", str(tmp_path)]) == 0
    for src in [results / "pd_table.csv", results / "locerr.csv",
                *results.glob("roc_*.csv")]:
        assert (tmp_path / src.name).read_bytes() == src.read_bytes()


def test_seed_override_changes_results(pipeline, tmp_path):
    root, cfg = pipeline
    assert main(["run", "--config", str(cfg), "--model", str(root / "model.dat"),
                 "--out", str(tmp_path), "--seed", "999"]) == 0
    baseline = (root / "results" / "replicates.csv").read_bytes()
    assert (tmp_path / "replicates.csv").read_bytes() != baseline


def test_method_and_replicate_overrides(pipeline, tmp_path):
    root, cfg = pipeline
    assert main(["run", "--config", str(cfg), "--model", str(root / "model.dat"),
                 "--out", str(tmp_path), "--methods", "uWC", "--replicates", "2"]) == 0
    rows = (tmp_path / "replicates.csv").read_text().splitlines()[1:]
    assert len(rows) == 6 * 2
    assert all(row.split(",")[3] == "uWC" for row in rows)


def test_missing_survey_is_a_data_error(tmp_path, capsys):
    rc = main(["learn", "--survey", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path / "m.dat")])
    assert rc == 3
    assert "cadet: error" in capsys.readouterr().err


def test_unknown_config_key_is_a_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    rc = main(["gen-survey", "--config", str(cfg), "--out", str(tmp_path / "s.csv")])
    assert rc == 2
    assert "no_such_key" in capsys.readouterr().err


def test_model_config_bin_mismatch(pipeline, tmp_path, capsys):
    root, _ = pipeline
    other = tmp_path / "c.json"
    other.write_text(json.dumps({"n_bins": 64}))
    rc = main(["run", "--config", str(other), "--model", str(root / "model.dat"),
               "--out", str(tmp_path / "r")])
    assert rc == 3
    assert "64" in capsys.readouterr().err


def test_non_model_file_is_a_data_error(pipeline, tmp_path, capsys):
    root, cfg = pipeline
    # a survey CSV is not a model file and must not crash the CLI
    rc = main(["run", "--config", str(cfg), "--model", str(root / "survey.csv"),
               "--out", str(tmp_path / "r")])
    assert rc == 3
    capsys.readouterr()


def test_report_on_empty_dir_is_a_data_error(tmp_path, capsys):
    rc = main(["report", "--in", str(tmp_path), "--out", str(tmp_path / "s")])
    assert rc == 3
    capsys.readouterr()
