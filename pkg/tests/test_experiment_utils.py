import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from config.status import STATUS_CONVERGED, STATUS_NUMERICAL_FAILURE
from utils import experiment_utils
from utils.errors import InvalidInputError, OutputError
from utils.experiment_utils import (SUMMARY_COLUMNS, TRACE_COLUMNS, SweepRow, SweepSpec, apply_axis, beampattern,
                                    convergence_path, emit_beampattern, emit_manifest, emit_power_allocation,
                                    emit_results, emit_validation, run_sweep, shutdown_active_pool,
                                    validate_statistics)
from utils.geometry_utils import steering_vector
from utils.metrics_utils import BeamformerSet, ChannelSet, RateAllocation, evaluate
from utils.scheme_utils import RunResult
from tests.conftest import NOISE, make_scenario, receiver


def _result(algorithm="alg3", status=STATUS_CONVERGED):
    scenario = make_scenario()
    channels = ChannelSet.from_geometry(scenario.users, scenario.eavesdroppers, scenario.array, NOISE, NOISE)
    bf = BeamformerSet(w_private=[0.2 * np.eye(4), 0.2 * np.eye(4)], w_common=0.1 * np.eye(4),
                       w_extra=0.1 * np.eye(4))
    return RunResult(
        algorithm=algorithm, scheme="scheme1", status=status, beamformers=bf,
        allocation=RateAllocation.zeros(2), metrics=evaluate(bf, RateAllocation.zeros(2), channels),
        objective_trace=[2.4, 2.4], dinkelbach_trace=[0.0, 0.0], penalty_trace=[0.3, 1e-9], crb_det=1e-8,
    )


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_steered_beam_peaks_at_its_angle():
    a = steering_vector(0.3, 8)
    bf = BeamformerSet(w_private=[np.outer(a, a.conj())])
    table = beampattern(bf, angle_grid=[-0.3, 0.0, 0.3])
    gains = table.gains_db["W_1"]
    assert gains[2] == pytest.approx(20.0 * math.log10(8.0))
    assert gains[2] > gains[0] and gains[2] > gains[1]


def test_isotropic_matrix_gives_a_flat_pattern():
    table = beampattern(BeamformerSet(w_private=[np.eye(6)]))
    np.testing.assert_allclose(table.gains_db["W_1"], 10.0 * math.log10(6.0))
    assert table.angles_deg[0] == pytest.approx(-90.0)
    assert table.angles_deg[-1] == pytest.approx(90.0)
    assert len(table.angles_deg) == 361


def test_zero_matrix_hits_the_floor_and_an_is_included():
    bf = BeamformerSet(w_private=[np.zeros((4, 4))], w_an=np.eye(4))
    table = beampattern(bf, angle_grid=[0.0, 0.5])
    np.testing.assert_allclose(table.gains_db["W_1"], -120.0)
    assert "W_AN" in table.gains_db


def test_peak_angles_finds_the_main_lobe():
    a = steering_vector(math.radians(20.0), 12)
    table = beampattern(BeamformerSet(w_private=[np.outer(a, a.conj())]))
    peaks = table.peak_angles("W_1")
    assert any(p == pytest.approx(20.0) for p in peaks)
    strongest = max(peaks, key=lambda p: table.gains_db["W_1"][list(table.angles_deg).index(p)])
    assert strongest == pytest.approx(20.0)


def test_beampattern_rejects_empty_grid():
    with pytest.raises(InvalidInputError):
        beampattern(BeamformerSet(w_private=[np.eye(2)]), angle_grid=[])


def test_validate_statistics_needs_enough_samples(toy_scenario):
    with pytest.raises(InvalidInputError):
        validate_statistics(toy_scenario, samples=9_999)


def test_validate_statistics_near_deterministic_channel():
    scenario = make_scenario()
    los_only = tuple(receiver(g.distance, math.degrees(g.azimuth), rician_factor=1e12) for g in scenario.users)
    scenario = replace(scenario, users=los_only, eavesdroppers=())
    report = validate_statistics(scenario, samples=10_000)
    assert report.max_deviation <= 1e-3
    assert set(report.deviations) == {"user[0]", "user[1]"}


@pytest.mark.slow
def test_validate_statistics_default_samples(toy_scenario):
    report = validate_statistics(toy_scenario, samples=100_000)
    assert report.max_deviation <= 0.02
    assert "eaves[0]" in report.deviations


def test_sweep_spec_validation():
    spec = SweepSpec("qos_threshold", (1, 2, 3))
    assert spec.values == (1.0, 2.0, 3.0)
    assert SweepSpec("crb_threshold", (-60, -70)).values == (-60.0, -70.0)
    with pytest.raises(InvalidInputError):
        SweepSpec("qos_threshold", (1.0, 3.0, 2.0))
    with pytest.raises(InvalidInputError):
        SweepSpec("qos_threshold", (1.0, 1.0))
    with pytest.raises(InvalidInputError):
        SweepSpec("bandwidth", (1.0,))
    with pytest.raises(InvalidInputError):
        SweepSpec("qos_threshold", (1.0,), algorithms=("alg9",))
    with pytest.raises(InvalidInputError):
        SweepSpec("qos_threshold", ())


def test_apply_axis_converts_units(toy_scenario):
    assert apply_axis(toy_scenario, "crb_threshold", -70.0).algorithm.crb_threshold == pytest.approx(1e-7)
    assert apply_axis(toy_scenario, "p_max", 30.0).algorithm.p_max == pytest.approx(1.0)
    assert apply_axis(toy_scenario, "secrecy_threshold", 1.5).algorithm.secrecy_threshold == 1.5
    widened = apply_axis(toy_scenario, "antennas", 8.0)
    assert widened.array.n_tx == widened.array.n_rx == 8
    with pytest.raises(InvalidInputError):
        apply_axis(toy_scenario, "antennas", 8.5)


def test_run_sweep_orders_rows_and_records_failures(monkeypatch, toy_scenario):
    seen = []

    def fake_run(algorithm, scheme, cfg, scenario):
        seen.append((algorithm, scheme, cfg.qos_threshold))
        if cfg.qos_threshold == 2.0 and scheme == "ben1":
            raise RuntimeError("solver exploded")
        return RunResult(algorithm=algorithm, scheme=scheme, status=STATUS_CONVERGED, objective_trace=[1.0])

    monkeypatch.setattr(experiment_utils, "run_algorithm", fake_run)
    spec = SweepSpec("qos_threshold", (1.0, 2.0), algorithms=("alg1",), schemes=("scheme1", "ben1"))
    rows = run_sweep(spec, toy_scenario, workers=1)

    assert [row.run_id for row in rows] == [
        "alg1-scheme1-000", "alg1-scheme1-001", "alg1-ben1-000", "alg1-ben1-001",
    ]
    expected = [("scheme1", 1.0), ("scheme1", 2.0), ("ben1", 1.0), ("ben1", 2.0)]
    assert sorted((scheme, qos) for _, scheme, qos in seen) == sorted(expected)
    failed = rows[3]
    assert failed.result is None
    assert failed.status == STATUS_NUMERICAL_FAILURE
    assert "solver exploded" in failed.message
    assert [row.status for row in rows[:3]] == [STATUS_CONVERGED] * 3
    assert rows[1].axis_value == 2.0


def test_shutdown_without_pool_is_a_no_op():
    shutdown_active_pool()


def test_emit_results_csv(tmp_path):
    path = tmp_path / "run.csv"
    written = emit_results([_result(), SweepRow("alg1-scheme1-001", "alg1", "scheme1", 3.0)], "csv", path)
    assert written == [path, convergence_path(path)]
    assert convergence_path(path).name == "run_convergence.csv"

    summary = _read_csv(path)
    assert summary[0] == SUMMARY_COLUMNS
    assert summary[1][0] == "alg3-scheme1-000"
    assert summary[1][-1] == STATUS_CONVERGED
    assert float(summary[1][SUMMARY_COLUMNS.index("power_w")]) == pytest.approx(2.4)
    assert summary[1][SUMMARY_COLUMNS.index("axis_value")] == ""
    assert summary[2][SUMMARY_COLUMNS.index("status")] == STATUS_NUMERICAL_FAILURE
    assert summary[2][SUMMARY_COLUMNS.index("objective")] == "nan"

    traces = _read_csv(convergence_path(path))
    assert traces[0] == TRACE_COLUMNS
    assert [row[1] for row in traces[1:]] == ["1", "2"]
    assert traces[2][TRACE_COLUMNS.index("penalty")] == repr(1e-9)


def test_emit_results_is_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_results(_result(), "csv", first)
    emit_results(_result(), "csv", second)
    assert first.read_bytes() == second.read_bytes()


def test_emit_results_json(tmp_path):
    path = tmp_path / "run.json"
    emit_results(_result(), "json", path)
    payload = json.loads(path.read_text())
    run = payload["runs"][0]
    assert run["status"] == STATUS_CONVERGED
    assert len(run["traces"]) == 2
    assert run["result"]["metrics"]["total_power"] == pytest.approx(2.4)
    assert run["result"]["iterations"] == 2


def test_emit_results_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        emit_results(_result(), "xml", tmp_path / "run.xml")
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OutputError):
        emit_results(_result(), "csv", blocker / "run.csv")


def test_emit_beampattern_and_power(tmp_path):
    bf = BeamformerSet(w_private=[np.eye(2)], w_common=np.eye(2), w_an=2.0 * np.eye(2))
    emit_beampattern(beampattern(bf, angle_grid=[0.0, 0.1]), tmp_path / "pattern.csv")
    pattern = _read_csv(tmp_path / "pattern.csv")
    assert pattern[0] == ["matrix_id", "angle_deg", "gain_db"]
    assert len(pattern) == 1 + 3 * 2

    emit_power_allocation(bf, tmp_path / "power.csv")
    power = {row[0]: (float(row[1]), float(row[2])) for row in _read_csv(tmp_path / "power.csv")[1:]}
    assert power["W_AN"] == (4.0, 0.5)
    assert sum(share for _, share in power.values()) == pytest.approx(1.0)


def test_emit_validation_formats(tmp_path):
    report = experiment_utils.ValidationReport(samples=10_000, deviations={"user[0]": 0.001, "eaves[0]": 0.004})
    emit_validation(report, "csv", tmp_path / "validation.csv")
    assert _read_csv(tmp_path / "validation.csv")[1] == ["user[0]", "0.001"]
    emit_validation(report, "json", tmp_path / "validation.json")
    payload = json.loads((tmp_path / "validation.json").read_text())
    assert payload["max_deviation"] == 0.004
    assert payload["samples"] == 10_000


def test_emit_manifest(tmp_path, toy_scenario):
    path = emit_manifest(tmp_path, toy_scenario, ["app.py", "validate"])
    manifest = json.loads(path.read_text())
    assert set(manifest) == {"generated_at", "argv", "scenario", "solver_chain", "packages"}
    assert manifest["generated_at"].endswith("+00:00")
    assert manifest["argv"] == ["app.py", "validate"]
    assert manifest["scenario"]["algorithm"]["p_max_w"] == 1.0
    assert manifest["scenario"]["array"]["n_tx"] == 4
    assert "numpy" in manifest["packages"]


def test_failed_row_keeps_the_cell_identity():
    row = experiment_utils._failed_row(RuntimeError("no solver"), "alg2-ben1-003", "alg2", "ben1", -65.0)
    assert (row.run_id, row.algorithm, row.scheme, row.axis_value) == ("alg2-ben1-003", "alg2", "ben1", -65.0)
    assert row.result is None
    assert row.status == STATUS_NUMERICAL_FAILURE
    assert row.message == "no solver"
