'''Closed-loop DC input impedance of the DQ current-controlled inverter.

Per frequency, the four coupled small-signal transfer functions from a DC-link
voltage perturbation to the dq currents and duties are solved as a dense 4x4
complex system, assembled into Z_i and put in parallel with the DC-link
capacitor to give Z_iT.
'''
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from vsc_impedance import config
from vsc_impedance.errors import (DegenerateFrequency, InfiniteImpedance,
                                  NumericalFailure, ResonantSingularity,
                                  SingularSystem, UnsupportedFrame)
from vsc_impedance.model_core import (Frame, ImpedanceCurve, feedforward_tf,
                                      regulator_tf, solve_operating_point)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoupledTfs:
    """Transfer functions at one s. G_idvi, G_iqvi in A/V; G_ddvi, G_dqvi in 1/V."""
    G_idvi: complex
    G_iqvi: complex
    G_ddvi: complex
    G_dqvi: complex

    def as_vector(self):
        return np.array([self.G_idvi, self.G_iqvi, self.G_ddvi, self.G_dqvi])


def coupled_system(design, op, ctrl, s):
    """Matrix and right-hand side of the small-signal equations, unknowns
    ordered (G_idvi, G_iqvi, G_ddvi, G_dqvi)."""
    L = design.filter_inductance
    r = design.filter_resistance
    v_i = design.v_dc_nominal
    w_l = design.omega0 * L
    z_l = s * L + r
    g_c = regulator_tf(ctrl.regulator, s)
    h_ff = feedforward_tf(ctrl.feedforward, s)
    matrix = np.array([
        [z_l, -w_l, -v_i, 0.0],
        [w_l, z_l, 0.0, -v_i],
        [g_c, w_l, v_i, 0.0],
        [-w_l, g_c, 0.0, v_i],
    ], dtype=complex)
    rhs = np.array([op.D_d, op.D_q, -op.D_d * h_ff, -op.D_q * h_ff], dtype=complex)
    return matrix, rhs


def solve_coupled_tfs(design, op, ctrl, s):
    if ctrl.frame is not Frame.DQ:
        raise UnsupportedFrame("analytic impedance is defined for the DQ frame only",
                               module="analytic_impedance", operation="solve_coupled_tfs")
    s = complex(s)
    if s == 0:
        raise DegenerateFrequency("s = 0", module="analytic_impedance",
                                  operation="solve_coupled_tfs", frequency_hz=0.0)
    matrix, rhs = coupled_system(design, op, ctrl, s)
    if np.linalg.cond(matrix) > config.SINGULAR_CONDITION_LIMIT:
        raise SingularSystem("small-signal system is numerically singular",
                             module="analytic_impedance", operation="solve_coupled_tfs",
                             frequency_hz=abs(s.imag) / (2 * np.pi))
    x = np.linalg.solve(matrix, rhs)
    return CoupledTfs(*(complex(v) for v in x))


def inverter_input_impedance(tfs, op):
    """Z_i = (2/3) / (I_d G_ddvi + D_d G_idvi + I_q G_dqvi + D_q G_iqvi)."""
    terms = (op.I_d * tfs.G_ddvi, op.D_d * tfs.G_idvi,
             op.I_q * tfs.G_dqvi, op.D_q * tfs.G_iqvi)
    denominator = sum(terms)
    scale = sum(abs(t) for t in terms) + abs(op.D_d * tfs.G_ddvi)
    if abs(denominator) <= config.OPEN_CIRCUIT_RTOL * scale:
        raise InfiniteImpedance("bridge draws no small-signal current (open circuit)",
                                module="analytic_impedance",
                                operation="inverter_input_impedance")
    return (2.0 / 3.0) / denominator


def capacitor_impedance(c_i, esr, s):
    s = complex(s)
    if s == 0:
        raise DegenerateFrequency("capacitor impedance at s = 0", module="analytic_impedance",
                                  operation="capacitor_impedance", frequency_hz=0.0)
    return esr + 1.0 / (s * c_i)


def total_input_impedance(z_i, z_ci):
    """Z_iT = Z_Ci || Z_i. An infinite z_ci returns z_i."""
    if np.isinf(abs(z_ci)):
        return complex(z_i)
    total = z_ci + z_i
    if abs(total) <= np.finfo(float).tiny or abs(total) < 1e-15 * max(abs(z_i), abs(z_ci)):
        raise ResonantSingularity("parallel resonance: Z_i + Z_Ci vanishes",
                                  module="analytic_impedance",
                                  operation="total_input_impedance")
    return z_ci * z_i / total


def _analytic_point(design, op, ctrl, f_hz):
    s = 2j * np.pi * f_hz
    z_ci = capacitor_impedance(design.dc_capacitance, design.dc_cap_esr, s)
    tfs = solve_coupled_tfs(design, op, ctrl, s)
    try:
        z_i = inverter_input_impedance(tfs, op)
    except InfiniteImpedance:
        return None, z_ci
    return z_i, total_input_impedance(z_i, z_ci)


def sweep_analytic(design, ctrl, grid, jobs=1):
    """Returns (Z_i, Z_iT) sampled on grid. Open-circuit Z_i points become gaps
    (Z_iT falls back to Z_Ci there); other per-point failures gap both."""
    if ctrl.frame is not Frame.DQ:
        raise UnsupportedFrame("analytic impedance is defined for the DQ frame only",
                               module="analytic_impedance", operation="sweep_analytic")
    op = solve_operating_point(design)
    freqs = grid.frequencies()
    logger.info("Analytic sweep: %d points, %.4g-%.4g Hz", freqs.size, freqs[0], freqs[-1])

    def point(f_hz):
        try:
            return _analytic_point(design, op, ctrl, f_hz), None
        except NumericalFailure as err:
            return (None, None), err

    if jobs == 1:
        results = [point(f) for f in freqs]
    else:
        results = Parallel(n_jobs=jobs)(delayed(point)(f) for f in freqs)

    z_i = np.zeros(freqs.size, dtype=complex)
    z_it = np.zeros(freqs.size, dtype=complex)
    gap_i = np.zeros(freqs.size, dtype=bool)
    gap_t = np.zeros(freqs.size, dtype=bool)
    notes = []
    for k, ((zi, zt), err) in enumerate(results):
        if err is not None:
            gap_i[k] = gap_t[k] = True
            notes.append(f"{freqs[k]:.6g} Hz: {err}")
            logger.warning("Analytic sweep gap at %.6g Hz: %s", freqs[k], err)
            continue
        if zi is None:
            gap_i[k] = True
            notes.append(f"{freqs[k]:.6g} Hz: open circuit")
        else:
            z_i[k] = zi
        z_it[k] = zt
    return (ImpedanceCurve(freqs, z_i, gap_i, label="Z_i analytic", notes=tuple(notes)),
            ImpedanceCurve(freqs, z_it, gap_t, label="Z_iT analytic", notes=tuple(notes)))
