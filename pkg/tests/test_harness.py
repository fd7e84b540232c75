import json

import pytest

from heisrect.harness import ExperimentConfig, RUNTIME_KEYS, main, run_experiment


def test_config_round_trip():
    cfg = ExperimentConfig(seed=7, radii=(0.125, 0.25), delta=1 / 3)
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    over = ExperimentConfig.from_text(cfg.to_text(), seed=9, levels="-2,-3")
    assert over.seed == 9 and over.levels == (-2, -3)


@pytest.mark.parametrize("text", ["n_lines = 0", "eps = -1", "surface = torus", "colour = red"])
def test_config_rejects_bad_values(text):
    with pytest.raises(ValueError):
        ExperimentConfig.from_text(text)


def test_unknown_experiment():
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(), "everything")


def test_report_is_written(tmp_path):
    cfg = ExperimentConfig(surface="vertical-hyperplane", cloud_size=100, out=str(tmp_path / "r"))
    rep = run_experiment(cfg, "extract")
    assert rep.passed
    paths = rep.write()
    assert sorted(p.name for p in paths) == ["extract_extract.csv", "extract_summary.json"]
    summary = json.loads(paths[-1].read_text())
    assert summary["results"]["n_kept"] == 100
    assert not set(RUNTIME_KEYS) & set(summary["config"])


def test_unwritable_output_is_an_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["extract", "--cloud-size", "20", "--out", str(blocker / "sub")])
    assert code == 2
    assert "cannot create output directory" in capsys.readouterr().err


def test_cli_runs_and_reports(tmp_path, capsys):
    conf = tmp_path / "run.cfg"
    conf.write_text("# small run\nn_cases = 200\nsuite = algebra\n")
    assert main(["verify", "--config", str(conf), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert main(["verify", "--config", str(conf), "--surface", "nope", "--out", str(tmp_path)]) == 2


def test_outputs_do_not_depend_on_workers(tmp_path):
    outs = []
    for workers in (1, 3):
        d = tmp_path / f"w{workers}"
        cfg = ExperimentConfig(region="ball", n_lines=800, workers=workers, out=str(d))
        run_experiment(cfg, "nm").write()
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
