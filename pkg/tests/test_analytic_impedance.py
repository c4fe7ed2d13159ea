import math

import numpy as np
import pytest

from vsc_impedance.analytic_impedance import (capacitor_impedance, coupled_system,
                                              inverter_input_impedance, solve_coupled_tfs,
                                              sweep_analytic, total_input_impedance)
from vsc_impedance.config_loader import load_run_config
from vsc_impedance.errors import DegenerateFrequency, UnsupportedFrame
from vsc_impedance.model_core import (ControllerSpec, ConverterDesign, Feedforward,
                                      FeedforwardMode, FrequencyGrid, PIRegulator, pi_tf,
                                      solve_operating_point)
from vsc_impedance.reduced_model import ReducedModel, sweep_reduced


def _with_feedforward(run, ff):
    return run.controller.model_copy(update={"feedforward": ff})


def test_ideal_feedforward_is_constant_power(fig5, wide_grid):
    z_i, _ = sweep_analytic(fig5.design, fig5.controller, wide_grid)
    assert not z_i.has_gaps
    np.testing.assert_allclose(z_i.values, -98.0, rtol=1e-9)


def test_ideal_feedforward_with_filter_losses(fig5, wide_grid):
    design = fig5.design.model_copy(update={"filter_resistance": 0.05})
    op = solve_operating_point(design)
    expected = -700.0 ** 2 / (5000.0 + 1.5 * 0.05 * op.I_d ** 2)
    z_i, _ = sweep_analytic(design, fig5.controller, wide_grid)
    np.testing.assert_allclose(z_i.values, expected, rtol=1e-9)


@pytest.mark.parametrize("ff", [Feedforward(mode=FeedforwardMode.CONSTANT),
                                Feedforward.filtered(1000.0)])
@pytest.mark.parametrize("f_hz", [3.0, 50.0, 700.0])
def test_coupled_solution_matches_closed_form(fig5, ff, f_hz):
    design = fig5.design.model_copy(update={"filter_resistance": 0.02})
    ctrl = _with_feedforward(fig5, ff)
    op = solve_operating_point(design)
    s = 2j * math.pi * f_hz
    L, r, v = design.filter_inductance, design.filter_resistance, design.v_dc_nominal
    w_l = design.omega0 * L
    g_c = pi_tf(ctrl.regulator, s)
    h = 0.0 if ff.mode is FeedforwardMode.CONSTANT else 1.0 / (1.0 + s / (2 * math.pi * 1000.0))
    g_id = op.D_d * (1 - h) / (s * L + r + g_c)
    g_iq = op.D_q * (1 - h) / (s * L + r + g_c)
    g_dd = ((s * L + r) * g_id - w_l * g_iq - op.D_d) / v
    g_dq = (w_l * g_id + (s * L + r) * g_iq - op.D_q) / v

    tfs = solve_coupled_tfs(design, op, ctrl, s)
    np.testing.assert_allclose(tfs.as_vector(), [g_id, g_iq, g_dd, g_dq], rtol=1e-8, atol=1e-15)


def test_system_residual_is_small(fig6):
    op = solve_operating_point(fig6.design)
    s = 2j * math.pi * 120.0
    matrix, rhs = coupled_system(fig6.design, op, fig6.controller, s)
    x = solve_coupled_tfs(fig6.design, op, fig6.controller, s).as_vector()
    assert np.linalg.norm(matrix @ x - rhs) < 1e-12 * np.linalg.norm(rhs)


def _random_run(seed, resistive=False):
    rng = np.random.default_rng(seed)
    design = ConverterDesign(v_dc_nominal=rng.uniform(650.0, 900.0), p_out=rng.uniform(1e3, 1e5),
                             filter_inductance=rng.uniform(5e-5, 2e-3),
                             filter_resistance=rng.uniform(1e-3, 0.1) if resistive else 0.0,
                             dc_capacitance=rng.uniform(1e-5, 1e-3))
    ctrl = ControllerSpec(regulator=PIRegulator(k_p=rng.uniform(0.05, 2.0),
                                                tau_i=rng.uniform(1e-3, 2e-2)))
    return design, ctrl, rng


@pytest.mark.parametrize("name", ["fig5", "fig6", "fig7"])
def test_constant_power_for_every_rated_power(name, wide_grid):
    run = load_run_config(name)
    z_i, _ = sweep_analytic(run.design, run.controller, wide_grid)
    expected = -run.design.v_dc_nominal ** 2 / run.design.p_out
    np.testing.assert_allclose(z_i.values, expected, rtol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_constant_power_for_random_designs(seed, wide_grid):
    design, ctrl, _ = _random_run(seed)
    z_i, _ = sweep_analytic(design, ctrl, wide_grid)
    np.testing.assert_allclose(z_i.values, -design.v_dc_nominal ** 2 / design.p_out, rtol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_system_residual_at_random_points(seed):
    design, ctrl, rng = _random_run(seed, resistive=True)
    op = solve_operating_point(design)
    modes = [Feedforward(), Feedforward(mode=FeedforwardMode.CONSTANT),
             Feedforward.filtered(rng.uniform(200.0, 5000.0))]
    for ff in modes:
        ctrl_ff = ctrl.model_copy(update={"feedforward": ff})
        for f_hz in np.exp(rng.uniform(np.log(1.0), np.log(5000.0), 4)):
            s = 2j * math.pi * f_hz
            matrix, rhs = coupled_system(design, op, ctrl_ff, s)
            x = solve_coupled_tfs(design, op, ctrl_ff, s).as_vector()
            assert np.linalg.norm(matrix @ x - rhs) < 1e-12 * np.linalg.norm(matrix) * np.linalg.norm(x)


@pytest.mark.parametrize("ff", [Feedforward(mode=FeedforwardMode.CONSTANT), Feedforward.filtered(1000.0)])
def test_impedance_is_conjugate_symmetric(fig6, ff):
    design = fig6.design.model_copy(update={"filter_resistance": 0.02})
    ctrl = _with_feedforward(fig6, ff)
    op = solve_operating_point(design)
    for f_hz in (3.0, 120.0, 1500.0):
        s = 2j * math.pi * f_hz
        z_ci = capacitor_impedance(design.dc_capacitance, design.dc_cap_esr, s)
        z_ci_neg = capacitor_impedance(design.dc_capacitance, design.dc_cap_esr, s.conjugate())
        z = total_input_impedance(inverter_input_impedance(solve_coupled_tfs(design, op, ctrl, s), op), z_ci)
        z_neg = total_input_impedance(
            inverter_input_impedance(solve_coupled_tfs(design, op, ctrl, s.conjugate()), op), z_ci_neg)
        assert z_neg == pytest.approx(z.conjugate(), rel=1e-8)


def test_constant_feedforward_low_frequency_sign(fig5):
    ctrl = _with_feedforward(fig5, Feedforward(mode=FeedforwardMode.CONSTANT))
    op = solve_operating_point(fig5.design)
    low = inverter_input_impedance(solve_coupled_tfs(fig5.design, op, ctrl, 2j * math.pi * 1.0), op)
    mid = inverter_input_impedance(solve_coupled_tfs(fig5.design, op, ctrl, 2j * math.pi * 10.0), op)
    assert low.real < 0
    assert mid.real > 0


def test_ideal_analytic_matches_reduced(fig5, wide_grid):
    _, z_it = sweep_analytic(fig5.design, fig5.controller, wide_grid)
    reduced = sweep_reduced(ReducedModel.from_design(fig5.design), wide_grid)
    np.testing.assert_allclose(z_it.values, reduced.values, rtol=1e-9)


def test_zero_power_is_open_circuit(fig5, bode_grid):
    design = fig5.design.model_copy(update={"p_out": 0.0})
    z_i, z_it = sweep_analytic(design, fig5.controller, bode_grid)
    assert z_i.gaps.all()
    assert not z_it.has_gaps
    s = 2j * math.pi * bode_grid.frequencies()
    np.testing.assert_allclose(z_it.values, 1.0 / (s * design.dc_capacitance), rtol=1e-12)
    assert "open circuit" in z_i.notes[0]


def test_parallel_job_sweep_is_identical(fig6, bode_grid):
    serial = sweep_analytic(fig6.design, fig6.controller, bode_grid, jobs=1)[1]
    parallel = sweep_analytic(fig6.design, fig6.controller, bode_grid, jobs=2)[1]
    np.testing.assert_array_equal(serial.values, parallel.values)


def test_single_point_grid(fig7):
    grid = FrequencyGrid(f_min=100.0, f_max=100.0, points=1)
    z_i, z_it = sweep_analytic(fig7.design, fig7.controller, grid)
    assert len(z_it) == 1
    assert z_i.values[0] == pytest.approx(-700.0 ** 2 / 150000.0)


def test_alphabeta_not_supported(fig5_alphabeta, bode_grid):
    with pytest.raises(UnsupportedFrame):
        sweep_analytic(fig5_alphabeta.design, fig5_alphabeta.controller, bode_grid)


def test_capacitor_impedance():
    s = 2j * math.pi * 100.0
    assert capacitor_impedance(1e-3, 0.01, s) == pytest.approx(0.01 + 1 / (s * 1e-3))
    with pytest.raises(DegenerateFrequency):
        capacitor_impedance(1e-3, 0.0, 0)
    assert total_input_impedance(-5.0 + 1j, math.inf) == -5.0 + 1j
