'''Fixed-step simulation of the switching-averaged grid-tie converter.

The plant is integrated in the synchronous frame with classic RK4. The
discrete current controller (DQ-PI or AlphaBeta-PR) runs once per control
period and its output is held until the next sample. What is held depends on
where the feedforward division happens:

- feedforward_sampling="modulator": with Ideal or Filtered feedforward the
  converter voltage reference is held and the modulator divides it by the
  live (sensed or filtered) DC voltage.
- feedforward_sampling="control": the duty is computed at the sample instant
  from the DC voltage sampled there and held for the whole period.

Constant feedforward always holds the duty (the divisor never changes).
'''
import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import Field, model_validator
from scipy import integrate, signal

from vsc_impedance import config
from vsc_impedance.errors import (InfeasibleOperatingPoint, InvalidSimConfig,
                                  MalformedCapture, ModulationSaturation,
                                  NumericalDivergence)
from vsc_impedance.model_core import (FeedforwardMode, Frame, PIRegulator,
                                      _Spec, inverse_clarke, inverse_park,
                                      solve_operating_point)
from vsc_impedance.utils import atomic_write

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t_s", "v_dc_V", "i_dc_port_A", "v_src_V", "i_d_A", "i_q_A", "d_d", "d_q"]


class Injection(_Spec):
    frequency: float = Field(gt=0)
    amplitude: float = Field(ge=0)


class SourceSpec(_Spec):
    """DC source behind a series resistance. v_nominal=None picks the EMF that
    puts the link exactly at design.v_dc_nominal at the operating point."""
    v_nominal: Optional[float] = Field(None, gt=0)
    series_resistance: float = Field(config.DEFAULT_SOURCE_RESISTANCE, gt=0)
    injection: Optional[Injection] = None

    @model_validator(mode="after")
    def _small_signal_guard(self):
        if self.v_nominal is not None and self.injection is not None:
            if not self.injection.amplitude < config.INJECTION_GUARD_FRACTION * self.v_nominal:
                raise ValueError("injection amplitude must stay below 0.2 * v_nominal")
        return self

    def with_injection(self, frequency, amplitude):
        return self.model_copy(update={"injection": Injection(frequency=frequency, amplitude=amplitude)})


class SimConfig(_Spec):
    dt: float = Field(config.DEFAULT_SIM_STEP_S, gt=0)
    duration: float = Field(config.DEFAULT_SIM_DURATION_S, gt=0)
    record_decimation: int = Field(config.DEFAULT_RECORD_DECIMATION, ge=1)
    feedforward_sampling: Literal["modulator", "control"] = "modulator"


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Uniformly sampled simulator output. Currents in the synchronous frame,
    i_dc_port positive into the converter (capacitor branch included)."""
    time: np.ndarray
    v_dc: np.ndarray
    i_dc_port: np.ndarray
    v_source: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    duty_d: np.ndarray
    duty_q: np.ndarray
    omega0: float = config.DEFAULT_OMEGA0

    @property
    def sample_rate(self):
        return 1.0 / (self.time[1] - self.time[0])

    def phase_currents(self):
        alpha, beta = inverse_park(self.i_d, self.i_q, self.omega0 * self.time)
        return inverse_clarke(alpha, beta)

    def to_frame(self):
        return pd.DataFrame({
            "t_s": self.time, "v_dc_V": self.v_dc, "i_dc_port_A": self.i_dc_port,
            "v_src_V": self.v_source, "i_d_A": self.i_d, "i_q_A": self.i_q,
            "d_d": self.duty_d, "d_q": self.duty_q,
        }, columns=TRACE_COLUMNS)


def dc_port_current(trace):
    return trace.i_dc_port


@dataclass(frozen=True)
class EnergyBalance:
    """Energies in joules over one interval of a trace."""
    source_in: float
    delivered: float
    losses: float
    stored_change: float

    @property
    def residual(self):
        return self.source_in - self.delivered - self.losses - self.stored_change

    @property
    def relative_error(self):
        scale = max(abs(self.source_in), abs(self.delivered), np.finfo(float).tiny)
        return abs(self.residual) / scale


def energy_balance(trace, design, source, t_start=None, t_end=None):
    """Source EMF energy against grid delivery, resistive losses (source,
    filter, capacitor ESR) and the change of energy stored in C and L.
    Defaults to the last fundamental period of the trace."""
    if t_end is None:
        t_end = trace.time[-1]
    if t_start is None:
        t_start = t_end - 2.0 * math.pi / design.omega0
    sel = (trace.time >= t_start - 1e-12) & (trace.time <= t_end + 1e-12)
    if np.count_nonzero(sel) < 2:
        raise InvalidSimConfig("energy interval holds fewer than two samples",
                               module="averaged_sim", operation="energy_balance")
    t = trace.time[sel]
    v, i_src = trace.v_dc[sel], trace.i_dc_port[sel]
    i_d, i_q = trace.i_d[sel], trace.i_q[sel]
    i_bridge = 1.5 * (trace.duty_d[sel] * i_d + trace.duty_q[sel] * i_q)
    i_cap = i_src - i_bridge
    v_cap = v - design.dc_cap_esr * i_cap
    i_sq = i_d ** 2 + i_q ** 2

    source_in = integrate.trapezoid(trace.v_source[sel] * i_src, t)
    delivered = integrate.trapezoid(1.5 * design.v_gd * i_d, t)
    losses = integrate.trapezoid(source.series_resistance * i_src ** 2
                                 + design.dc_cap_esr * i_cap ** 2
                                 + 1.5 * design.filter_resistance * i_sq, t)
    stored = (0.5 * design.dc_capacitance * (v_cap[-1] ** 2 - v_cap[0] ** 2)
              + 0.75 * design.filter_inductance * (i_sq[-1] - i_sq[0]))
    return EnergyBalance(float(source_in), float(delivered), float(losses), float(stored))


# ---------------------------------------------------------------------------
# Discrete regulators
# ---------------------------------------------------------------------------

class _PIAxis:
    """Backward-Euler PI: x[k] = x[k-1] + T e[k], u = k_p (e + x / tau_i)."""

    def __init__(self, regulator, period, output0=0.0):
        self.k_p = regulator.k_p
        self.inv_tau = 0.0 if math.isinf(regulator.tau_i) else 1.0 / regulator.tau_i
        self.period = period
        self.x = output0 / (self.k_p * self.inv_tau) if self.inv_tau else 0.0

    def step(self, error):
        self.x += self.period * error
        return self.k_p * (error + self.x * self.inv_tau)


class _PRAxis:
    """Proportional term plus a Tustin-discretized resonator, prewarped at the
    resonant frequency, run as a direct-form difference equation."""

    def __init__(self, regulator, period, history=(0.0, 0.0)):
        w_r = regulator.resonant_frequency
        fs_warped = w_r / (2.0 * math.tan(w_r * period / 2.0))
        b, a = signal.bilinear([regulator.k_r, 0.0], [1.0, 2.0 * regulator.damping, w_r * w_r],
                               fs=fs_warped)
        self.b = [float(v) / float(a[0]) for v in b]
        self.a = [float(v) / float(a[0]) for v in a]
        self.k_p = regulator.k_p
        self.e1 = self.e2 = 0.0
        self.y1, self.y2 = history

    def step(self, error):
        b0, b1, b2 = self.b
        _, a1, a2 = self.a
        y = b0 * error + b1 * self.e1 + b2 * self.e2 - a1 * self.y1 - a2 * self.y2
        self.e2, self.e1 = self.e1, error
        self.y2, self.y1 = self.y1, y
        return self.k_p * error + y


# ---------------------------------------------------------------------------
# Equilibrium and plant
# ---------------------------------------------------------------------------

def source_emf(design, source):
    """Source EMF: the configured one, or the value that holds the link at
    design.v_dc_nominal while feeding the operating-point power."""
    if source.v_nominal is not None:
        return source.v_nominal
    op = solve_operating_point(design)
    p_dc = 1.5 * (design.v_gd * op.I_d + design.filter_resistance * op.I_d ** 2)
    return design.v_dc_nominal + source.series_resistance * p_dc / design.v_dc_nominal


def equilibrium_link_voltage(design, source):
    op = solve_operating_point(design)
    p_dc = 1.5 * (design.v_gd * op.I_d + design.filter_resistance * op.I_d ** 2)
    v_s = source_emf(design, source)
    disc = v_s * v_s - 4.0 * source.series_resistance * p_dc
    if disc < 0:
        raise InfeasibleOperatingPoint("source cannot deliver the operating-point power",
                                       module="averaged_sim", operation="simulate")
    return 0.5 * (v_s + math.sqrt(disc))


def _make_derivative(design, ctrl, source, v_src_nom, divide_live):
    """Returns f(t, i_d, i_q, v_c, v_f, h1, h2) -> (di_d, di_q, dv_c, dv_f,
    v_dc, i_src, d_d, d_q). (h1, h2) is the held control output in the control
    frame; divide_live is None (held duty), "terminal" or "filter"."""
    L = design.filter_inductance
    r = design.filter_resistance
    C = design.dc_capacitance
    esr = design.dc_cap_esr
    r_s = source.series_resistance
    g = esr / r_s
    v_gd = design.v_gd
    w0 = design.omega0
    w_l = w0 * L
    rotating = ctrl.frame is Frame.ALPHA_BETA
    ff = ctrl.feedforward
    w_f = 2.0 * math.pi * ff.bandwidth_hz if ff.mode is FeedforwardMode.FILTERED else 0.0
    if source.injection is not None and source.injection.amplitude > 0:
        amp = source.injection.amplitude
        w_inj = 2.0 * math.pi * source.injection.frequency
    else:
        amp = w_inj = 0.0
    sin, cos, sqrt = math.sin, math.cos, math.sqrt

    def derivative(t, i_d, i_q, v_c, v_f, h1, h2):
        v_s = v_src_nom + amp * sin(w_inj * t) if amp else v_src_nom
        if rotating:
            c_t, s_t = cos(w0 * t), sin(w0 * t)
            a_d, a_q = h1 * c_t + h2 * s_t, -h1 * s_t + h2 * c_t
        else:
            a_d, a_q = h1, h2
        if divide_live == "terminal":
            # converter voltage held; bridge power fixed, link voltage from the ESR quadratic
            p_br = 1.5 * (a_d * i_d + a_q * i_q)
            if esr:
                b = v_c + g * v_s
                disc = b * b - 4.0 * (1.0 + g) * esr * p_br
                v = (b + sqrt(disc)) / (2.0 * (1.0 + g)) if disc >= 0 else math.nan
            else:
                v = v_c
            u_d, u_q = a_d, a_q
            i_dc = p_br / v
            d_d, d_q = u_d / v, u_q / v
        else:
            if divide_live == "filter":
                d_d, d_q = a_d / v_f, a_q / v_f
            else:
                d_d, d_q = a_d, a_q
            i_dc = 1.5 * (d_d * i_d + d_q * i_q)
            v = (v_c + esr * (v_s / r_s - i_dc)) / (1.0 + g) if esr else v_c
            u_d, u_q = d_d * v, d_q * v
        i_src = (v_s - v) / r_s
        return ((-r * i_d + w_l * i_q + u_d - v_gd) / L,
                (-r * i_q - w_l * i_d + u_q) / L,
                (i_src - i_dc) / C,
                w_f * (v - v_f),
                v, i_src, d_d, d_q)

    return derivative


def _check_config(ctrl, source, sim, v_src_nom):
    period = 1.0 / ctrl.control_rate
    if sim.dt > period / 10.0:
        raise InvalidSimConfig("plant step must be at most a tenth of the control period",
                               module="averaged_sim", operation="simulate", field="sim.dt")
    steps = round(period / sim.dt)
    if abs(steps * sim.dt - period) > 1e-9 * period:
        raise InvalidSimConfig("control period must be an integer number of plant steps",
                               module="averaged_sim", operation="simulate", field="sim.dt")
    inj = source.injection
    if inj is not None and not inj.amplitude < config.INJECTION_GUARD_FRACTION * v_src_nom:
        raise InvalidSimConfig("injection amplitude must stay below 0.2 * v_nominal",
                               module="averaged_sim", operation="simulate",
                               field="source.injection.amplitude")
    if isinstance(ctrl.regulator, PIRegulator) != (ctrl.frame is Frame.DQ):
        raise InvalidSimConfig("regulator does not match the control frame",
                               module="averaged_sim", operation="simulate", field="ctrl.regulator")
    return steps


def simulate(design, ctrl, source, sim=SimConfig()):
    """Integrates the averaged plant from its operating-point equilibrium for
    sim.duration seconds and returns the decimated trace."""
    op = solve_operating_point(design)
    v_src_nom = source_emf(design, source)
    steps_per_sample = _check_config(ctrl, source, sim, v_src_nom)
    v_eq = equilibrium_link_voltage(design, source)

    period = 1.0 / ctrl.control_rate
    ff_mode = ctrl.feedforward.mode
    if ff_mode is FeedforwardMode.CONSTANT:
        divide_live = None
    elif sim.feedforward_sampling == "modulator":
        divide_live = "terminal" if ff_mode is FeedforwardMode.IDEAL else "filter"
    else:
        divide_live = None
    f = _make_derivative(design, ctrl, source, v_src_nom, divide_live)

    L, r, w0, v_gd = design.filter_inductance, design.filter_resistance, design.omega0, design.v_gd
    w_l = w0 * L
    i_ref_d, i_ref_q = op.I_d, op.I_q
    rotating = ctrl.frame is Frame.ALPHA_BETA
    if rotating:
        # resonator history matching the steady sinusoid the plant needs; the
        # held output is averaged over a period, hence the half-sample lead
        # and the sinc correction
        half = w0 * period / 2.0
        lead = complex(math.cos(half), math.sin(half)) * half / math.sin(half)
        u_needed = complex(v_gd + r * op.I_d - w_l * op.I_q, w_l * op.I_d + r * op.I_q)
        y_amp = u_needed * lead - v_gd
        hist = tuple(y_amp * complex(math.cos(-k * w0 * period), math.sin(-k * w0 * period))
                     for k in (1, 2))
        axes = (_PRAxis(ctrl.regulator, period, (hist[0].real, hist[1].real)),
                _PRAxis(ctrl.regulator, period, (hist[0].imag, hist[1].imag)))
    else:
        axes = (_PIAxis(ctrl.regulator, period, r * op.I_d),
                _PIAxis(ctrl.regulator, period, r * op.I_q))

    v_ff_const = design.v_dc_nominal
    limit = config.DIVERGENCE_VOLTAGE_FACTOR * v_src_nom
    dt = sim.dt
    half_dt = 0.5 * dt
    dt6 = dt / 6.0
    dec = sim.record_decimation
    n_samples = max(1, math.ceil(sim.duration * ctrl.control_rate - 1e-9))

    i_d, i_q, v_c, v_f = op.I_d, op.I_q, v_eq, v_eq
    h1 = h2 = 0.0
    streak, streak_start = 0, None
    rec = {name: [] for name in TRACE_COLUMNS}
    step = 0
    logger.debug("simulate: %s frame, %s feedforward (%s), %.3g s, %d steps/sample",
                 ctrl.frame.value, ff_mode.value, sim.feedforward_sampling,
                 sim.duration, steps_per_sample)

    for k in range(n_samples):
        t_k = step * dt
        v_meas = v_eq if k == 0 else f(t_k, i_d, i_q, v_c, v_f, h1, h2)[4]
        if not (math.isfinite(v_meas) and math.isfinite(i_d) and math.isfinite(i_q)
                and math.isfinite(v_f)) or abs(v_meas) > limit:
            raise NumericalDivergence(f"state left the valid region at t = {t_k:.6g} s",
                                      module="averaged_sim", operation="simulate")

        # controller sample
        if rotating:
            c_t, s_t = math.cos(w0 * t_k), math.sin(w0 * t_k)
            ref_a = i_ref_d * c_t - i_ref_q * s_t
            ref_b = i_ref_d * s_t + i_ref_q * c_t
            meas_a = i_d * c_t - i_q * s_t
            meas_b = i_d * s_t + i_q * c_t
            u1 = axes[0].step(ref_a - meas_a) + v_gd * c_t
            u2 = axes[1].step(ref_b - meas_b) + v_gd * s_t
        else:
            u1 = axes[0].step(i_ref_d - i_d) + v_gd - w_l * i_q
            u2 = axes[1].step(i_ref_q - i_q) + w_l * i_d

        if ff_mode is FeedforwardMode.CONSTANT:
            divisor = v_ff_const
        elif ff_mode is FeedforwardMode.IDEAL:
            divisor = v_meas
        else:
            divisor = v_f
        m_index = math.hypot(u1, u2) / divisor
        if m_index > 1.0:
            if streak == 0:
                streak_start = t_k
            streak += 1
            if streak >= config.SATURATION_PERSIST_SAMPLES:
                raise ModulationSaturation(
                    f"modulation index above 1 for {streak} consecutive samples",
                    first_violation_s=streak_start, module="averaged_sim", operation="simulate")
            u1, u2 = u1 / m_index, u2 / m_index
        else:
            streak = 0
        if divide_live is None:
            h1, h2 = u1 / divisor, u2 / divisor
        else:
            h1, h2 = u1, u2

        for _ in range(steps_per_sample):
            t = step * dt
            k1 = f(t, i_d, i_q, v_c, v_f, h1, h2)
            if step % dec == 0:
                rec["t_s"].append(t)
                rec["v_dc_V"].append(k1[4])
                rec["i_dc_port_A"].append(k1[5])
                rec["v_src_V"].append(k1[5] * source.series_resistance + k1[4])
                rec["i_d_A"].append(i_d)
                rec["i_q_A"].append(i_q)
                rec["d_d"].append(k1[6])
                rec["d_q"].append(k1[7])
            k2 = f(t + half_dt, i_d + half_dt * k1[0], i_q + half_dt * k1[1],
                   v_c + half_dt * k1[2], v_f + half_dt * k1[3], h1, h2)
            k3 = f(t + half_dt, i_d + half_dt * k2[0], i_q + half_dt * k2[1],
                   v_c + half_dt * k2[2], v_f + half_dt * k2[3], h1, h2)
            k4 = f(t + dt, i_d + dt * k3[0], i_q + dt * k3[1],
                   v_c + dt * k3[2], v_f + dt * k3[3], h1, h2)
            i_d += dt6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            i_q += dt6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            v_c += dt6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            v_f += dt6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
            step += 1

    data = {name: np.asarray(values, dtype=float) for name, values in rec.items()}
    if not all(np.all(np.isfinite(v)) for v in data.values()):
        raise NumericalDivergence("non-finite samples in the trace",
                                  module="averaged_sim", operation="simulate")
    return SimTrace(time=data["t_s"], v_dc=data["v_dc_V"], i_dc_port=data["i_dc_port_A"],
                    v_source=data["v_src_V"], i_d=data["i_d_A"], i_q=data["i_q_A"],
                    duty_d=data["d_d"], duty_q=data["d_q"], omega0=w0)


# ---------------------------------------------------------------------------
# CSV export / import
# ---------------------------------------------------------------------------

def write_trace_csv(trace, path):
    frame = trace.to_frame()
    atomic_write(path, lambda handle: frame.to_csv(handle, index=False,
                                                   float_format=config.CSV_FLOAT_FORMAT))
    logger.info("Wrote %d trace samples to %s", len(frame), path)


def read_trace_csv(path, omega0=config.DEFAULT_OMEGA0):
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise MalformedCapture(f"cannot read trace {path}: {e}",
                               module="averaged_sim", operation="read_trace_csv") from e
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedCapture(f"trace is missing columns {missing}",
                               module="averaged_sim", operation="read_trace_csv")
    col = {c: frame[c].to_numpy(dtype=float) for c in TRACE_COLUMNS}
    return SimTrace(time=col["t_s"], v_dc=col["v_dc_V"], i_dc_port=col["i_dc_port_A"],
                    v_source=col["v_src_V"], i_d=col["i_d_A"], i_q=col["i_q_A"],
                    duty_d=col["d_d"], duty_q=col["d_q"], omega0=omega0)
