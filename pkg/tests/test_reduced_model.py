import math

import numpy as np
import pytest

from vsc_impedance.errors import ZeroPower
from vsc_impedance.model_core import FrequencyGrid
from vsc_impedance.reduced_model import (ReducedModel, r_cpl, reduced_total_impedance,
                                         sweep_reduced)


def test_r_cpl_per_power_level(fig5, fig6, fig7):
    assert r_cpl(fig5.design) == pytest.approx(-98.0)
    assert r_cpl(fig6.design) == pytest.approx(-12.25)
    assert r_cpl(fig7.design) == pytest.approx(-3.2667, abs=1e-4)


def test_efficiency_scales_r_cpl(fig5):
    design = fig5.design.model_copy(update={"efficiency": 0.95})
    assert r_cpl(design) == pytest.approx(-98.0 * 0.95)


def test_zero_power(fig5):
    with pytest.raises(ZeroPower):
        r_cpl(fig5.design.model_copy(update={"p_out": 0.0}))


def test_closed_form_equals_parallel_combination():
    model = ReducedModel(r_cpl=-12.25, c_i=80e-6)
    for f_hz in (1.0, 37.0, 500.0, 4000.0):
        s = 2j * math.pi * f_hz
        z_c = 1.0 / (s * model.c_i)
        parallel = model.r_cpl * z_c / (model.r_cpl + z_c)
        assert reduced_total_impedance(model, s) == pytest.approx(parallel, rel=1e-12)


def test_magnitude_and_phase_at_100hz(fig5):
    z = reduced_total_impedance(ReducedModel.from_design(fig5.design), 2j * math.pi * 100.0)
    assert abs(z) == pytest.approx(54.93, abs=0.01)
    assert math.degrees(np.angle(z)) == pytest.approx(-124.08, abs=0.01)


def test_phase_stays_in_left_half_plane(fig6):
    curve = sweep_reduced(ReducedModel.from_design(fig6.design),
                          FrequencyGrid(f_min=1.0, f_max=10_000.0, points=100))
    phase = np.abs(np.degrees(np.angle(curve.values)))
    assert np.all(phase > 90.0)
    assert np.all(phase <= 180.0)


def test_esr_variant(table1):
    model = ReducedModel.from_design(table1.design, with_esr=True)
    assert model.esr == pytest.approx(0.005)
    s = 2j * math.pi * 1000.0
    z_c = 0.005 + 1.0 / (s * model.c_i)
    expected = model.r_cpl * z_c / (model.r_cpl + z_c)
    assert reduced_total_impedance(model, s) == pytest.approx(expected)
    assert ReducedModel.from_design(table1.design).esr is None


def test_rejects_positive_resistance():
    with pytest.raises(ValueError):
        ReducedModel(r_cpl=10.0, c_i=1e-6)
