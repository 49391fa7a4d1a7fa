import pytest

from config.status import EXIT_CONFIG_ERROR, EXIT_OK
from scripts import reproduce_figures


def test_main_returns_the_exit_code_of_a_failed_load(tmp_path):
    code = reproduce_figures.main(["--config", str(tmp_path / "missing.cfg"), "--out-dir", str(tmp_path),
                                   "--experiments", "convergence"])
    assert code == EXIT_CONFIG_ERROR


def test_main_runs_only_the_selected_experiments(monkeypatch, tmp_path, toy_config_path):
    seen = []
    monkeypatch.setitem(reproduce_figures.EXPERIMENTS, "crb", lambda scenario, out_dir, workers: seen.append(workers))
    code = reproduce_figures.main(["--config", str(toy_config_path), "--out-dir", str(tmp_path / "figures"),
                                   "--experiments", "crb", "--workers", "2"])
    assert code == EXIT_OK
    assert seen == [2]
    assert (tmp_path / "figures" / "manifest.json").exists()


def test_unknown_experiment_is_rejected(tmp_path):
    with pytest.raises(SystemExit):
        reproduce_figures.main(["--experiments", "nope", "--out-dir", str(tmp_path)])
