import numpy as np
import pytest

from vsc_impedance.analytic_impedance import sweep_analytic
from vsc_impedance.compare_report import (ANALYTIC_GRID, FEEDFORWARD_BAND, SUITES,
                                          deviation_metrics, emit_bode_svg,
                                          run_scenario_suite, write_report_bundle)
from vsc_impedance.config_loader import load_run_config
from vsc_impedance.curve_io import emit_csv, read_curve_csv
from vsc_impedance.errors import IoFailure, MalformedCurveFile, NoOverlap
from vsc_impedance.model_core import ImpedanceCurve
from vsc_impedance.reduced_model import ReducedModel, sweep_reduced


def _deviation_from_reduced(name):
    run = load_run_config(name)
    _, z_it = sweep_analytic(run.design, run.controller, ANALYTIC_GRID)
    reduced = sweep_reduced(ReducedModel.from_design(run.design), ANALYTIC_GRID)
    return deviation_metrics(z_it, reduced, f_range=FEEDFORWARD_BAND).max_mag_dev_db


def test_identical_curves_do_not_deviate(fig6):
    curve = sweep_reduced(ReducedModel.from_design(fig6.design), ANALYTIC_GRID)
    m = deviation_metrics(curve, curve)
    assert m.max_mag_dev_db == 0.0
    assert m.max_phase_dev_deg == 0.0


def test_deviation_is_symmetric():
    f = np.geomspace(10.0, 1000.0, 30)
    a = ImpedanceCurve(f, 10.0 * np.exp(1j * np.linspace(-3.0, 3.0, 30)))
    b = ImpedanceCurve(f, 12.0 * np.exp(1j * np.linspace(-2.9, 3.1, 30)))
    ab, ba = deviation_metrics(a, b), deviation_metrics(b, a)
    assert ab.max_mag_dev_db == pytest.approx(ba.max_mag_dev_db)
    assert ab.max_phase_dev_deg == pytest.approx(ba.max_phase_dev_deg)
    assert ab.max_rel_dev == pytest.approx(ba.max_rel_dev)
    assert ab.max_mag_dev_db == pytest.approx(20 * np.log10(1.2))
    assert ab.max_phase_dev_deg == pytest.approx(np.degrees(0.1))


def test_complex_deviation_sees_phase_and_magnitude():
    f = np.array([10.0, 100.0])
    a = ImpedanceCurve(f, [10.0, 10.0])
    rotated = ImpedanceCurve(f, 10.0 * np.exp(1j * np.array([0.0, 0.1])))
    scaled = ImpedanceCurve(f, [12.0, 10.0])
    m = deviation_metrics(a, rotated)
    assert m.max_mag_dev_db == pytest.approx(0.0, abs=1e-12)
    assert m.max_rel_dev == pytest.approx(2.0 * np.sin(0.05))
    assert m.frequency_of_worst_rel == pytest.approx(100.0)
    assert deviation_metrics(a, scaled).max_rel_dev == pytest.approx(2.0 / 12.0)


def test_phase_deviation_wraps_across_180():
    f = np.array([10.0, 100.0])
    a = ImpedanceCurve(f, np.exp(1j * np.radians([179.0, 179.0])))
    b = ImpedanceCurve(f, np.exp(1j * np.radians([-179.0, -179.0])))
    assert deviation_metrics(a, b).max_phase_dev_deg == pytest.approx(2.0)


def test_per_band_breakdown():
    f = np.geomspace(10.0, 1000.0, 21)
    a = ImpedanceCurve(f, np.ones(21))
    b = ImpedanceCurve(f, np.where(f > 300.0, 2.0, 1.0))
    m = deviation_metrics(a, b, bands=[(10.0, 100.0), (400.0, 1000.0)])
    assert m.per_band[0].max_mag_dev_db == pytest.approx(0.0)
    assert m.per_band[1].max_mag_dev_db == pytest.approx(20 * np.log10(2.0))
    assert m.frequency_of_worst > 300.0
    with pytest.raises(NoOverlap):
        deviation_metrics(a, b, f_range=(2000.0, 3000.0))


def test_feedforward_deviation_ordering():
    ideal = _deviation_from_reduced("fig5")
    constant = _deviation_from_reduced("fig5_constant_ff")
    filtered = _deviation_from_reduced("fig5_filtered_ff")
    assert ideal < 1e-6
    assert constant > 3.0
    assert filtered > 1.5
    assert constant > filtered > ideal


def test_curve_csv_round_trip(tmp_path, fig7):
    curve = sweep_reduced(ReducedModel.from_design(fig7.design), ANALYTIC_GRID)
    path = tmp_path / "curve.csv"
    emit_csv(curve, path)
    assert path.read_text().splitlines()[0] == "f_hz,re_ohm,im_ohm"
    back = read_curve_csv(path)
    np.testing.assert_allclose(back.values, curve.values, rtol=1e-15)


def test_csv_leaves_out_gaps(tmp_path):
    f = np.array([10.0, 20.0, 30.0])
    curve = ImpedanceCurve(f, [1.0, 0.0, 3.0], gaps=[False, True, False])
    path = tmp_path / "gappy.csv"
    emit_csv(curve, path)
    np.testing.assert_allclose(read_curve_csv(path).frequencies, [10.0, 30.0])


def test_empty_curve_is_not_written(tmp_path):
    empty = ImpedanceCurve([10.0], [0.0], gaps=[True])
    with pytest.raises(IoFailure):
        emit_csv(empty, tmp_path / "empty.csv")
    with pytest.raises(IoFailure):
        emit_bode_svg([empty], tmp_path / "empty.svg")
    assert list(tmp_path.iterdir()) == []


def test_malformed_curve_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("freq,re,im\n1,2,3\n")
    with pytest.raises(MalformedCurveFile):
        read_curve_csv(path)
    path.write_text("f_hz,re_ohm,im_ohm\n10,1,0\n5,1,0\n")
    with pytest.raises(MalformedCurveFile):
        read_curve_csv(path)


def test_bode_svg_is_stable(tmp_path, fig5, fig6):
    curves = [sweep_reduced(ReducedModel.from_design(run.design), ANALYTIC_GRID)
              for run in (fig5, fig6)]
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_bode_svg(curves, first, labels=["5 kW", "40 kW"])
    emit_bode_svg(curves, second, labels=["5 kW", "40 kW"])
    text = first.read_text()
    assert first.read_bytes() == second.read_bytes()
    for i in range(2):
        assert text.count(f'id="magnitude-{i}"') == 1
        assert text.count(f'id="phase-{i}"') == 1


@pytest.mark.parametrize("suite", SUITES)
def test_suites_pass_without_simulation(suite):
    bundle = run_scenario_suite(suite, include_fra=False)
    assert bundle.reports
    assert bundle.passed, bundle.failed_checks()


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_scenario_suite("nope")


def test_report_bundle_files(tmp_path):
    bundle = run_scenario_suite("feedforward", include_fra=False)
    written = write_report_bundle(bundle, tmp_path)
    names = {p.rsplit("/", 1)[-1] for p in map(str, written)}
    assert "summary.txt" in names
    assert "feedforward-constant.txt" in names
    assert "feedforward-constant__analytic.csv" in names
    assert "feedforward-constant.svg" in names
    report = (tmp_path / "feedforward-ordering.txt").read_text()
    assert "[PASS] constant > filtered > ideal" in report
    assert "thresholds:" in report


def _statuses(bundle):
    return {(r.name, c.name): c.status for r in bundle.reports for c in r.checks}


@pytest.mark.slow
def test_bandwidth_suite_with_measurement():
    bundle = run_scenario_suite("bandwidth", include_fra=True, jobs=2)
    assert bundle.passed, bundle.failed_checks()
    statuses = _statuses(bundle)
    assert statuses[("bandwidth-160Hz", "160Hz loop follows the reduced model in 10-100 Hz")] == "pass"
    assert statuses[("bandwidth-15Hz", "15Hz loop departs from the reduced model in 10-100 Hz")] == "pass"
    assert statuses[("bandwidth-comparison",
                     "15 Hz loop deviates more than 160 Hz loop in 10-100 Hz")] == "pass"


@pytest.mark.slow
def test_feedforward_suite_with_measurement():
    bundle = run_scenario_suite("feedforward", include_fra=True, jobs=2)
    assert bundle.passed, bundle.failed_checks()
    statuses = _statuses(bundle)
    assert statuses[("feedforward-ideal", "measured matches analytic")] == "pass"
    assert statuses[("feedforward-constant", "measured matches analytic")] == "skip"


@pytest.mark.slow
def test_alphabeta_suite_covers_every_feedforward():
    bundle = run_scenario_suite("alphabeta", include_fra=True, jobs=2)
    assert [r.name for r in bundle.reports] == ["alphabeta-ideal", "alphabeta-constant",
                                                "alphabeta-filtered-1kHz"]
    assert bundle.passed, bundle.failed_checks()
    assert all("fra vs reduced" in r.metrics for r in bundle.reports)
