'''Domain types, reference-frame transforms, controller transfer functions and
the steady-state operating-point solver.

Conventions: amplitude-invariant Clarke/Park with the d-axis on the grid
voltage phasor (v_gq = 0), three-phase power P = (3/2)(v_d i_d + v_q i_q),
unity power factor at the operating point.
'''
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from vsc_impedance import config
from vsc_impedance.errors import (DegenerateFrequency, InfeasibleOperatingPoint,
                                  InvalidDesign)

SQRT3 = math.sqrt(3.0)


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ---------------------------------------------------------------------------
# Plant description
# ---------------------------------------------------------------------------

class GridSpec(_Spec):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    phase_voltage_amplitude: float = Field(
        config.DEFAULT_PHASE_VOLTAGE_AMPLITUDE, gt=0)
    fundamental_angular_frequency: float = Field(config.DEFAULT_OMEGA0, gt=0)


class ConverterDesign(_Spec):
    """Electrical plant parameters of the grid-tie 2L-VSC (SI units)."""
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    v_dc_nominal: float = Field(gt=0)
    p_out: float = Field(ge=0)
    efficiency: float = Field(1.0, gt=0, le=1)
    filter_inductance: float = Field(gt=0)
    filter_resistance: float = Field(0.0, ge=0)
    dc_capacitance: float = Field(gt=0)
    dc_cap_esr: float = Field(0.0, ge=0)
    switching_frequency: float = Field(10_000.0, gt=0)
    grid: GridSpec = GridSpec()

    @property
    def v_gd(self):
        return self.grid.phase_voltage_amplitude

    @property
    def omega0(self):
        return self.grid.fundamental_angular_frequency


# ---------------------------------------------------------------------------
# Controller description
# ---------------------------------------------------------------------------

class Frame(str, Enum):
    DQ = "DQ"
    ALPHA_BETA = "AlphaBeta"


class PIRegulator(_Spec):
    """Series PI: k_p * (1 + 1/(tau_i * s)). k_p in V/A."""
    kind: Literal["PI"] = "PI"
    k_p: float = Field(gt=0)
    tau_i: float = Field(gt=0)


class PRRegulator(_Spec):
    """k_p + k_r * s / (s^2 + 2*damping*s + resonant_frequency^2)."""
    kind: Literal["PR"] = "PR"
    k_p: float = Field(ge=0)
    k_r: float = Field(ge=0)
    resonant_frequency: float = Field(gt=0)
    damping: float = Field(0.0, ge=0)


Regulator = Annotated[Union[PIRegulator, PRRegulator], Field(discriminator="kind")]


class FeedforwardMode(str, Enum):
    IDEAL = "Ideal"
    CONSTANT = "Constant"
    FILTERED = "Filtered"


class Feedforward(_Spec):
    mode: FeedforwardMode = FeedforwardMode.IDEAL
    bandwidth_hz: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _bandwidth_when_filtered(self):
        if self.mode is FeedforwardMode.FILTERED and self.bandwidth_hz is None:
            raise ValueError("Filtered feedforward needs bandwidth_hz")
        return self

    @classmethod
    def filtered(cls, bandwidth_hz):
        return cls(mode=FeedforwardMode.FILTERED, bandwidth_hz=bandwidth_hz)


class ControllerSpec(_Spec):
    frame: Frame = Frame.DQ
    regulator: Regulator
    feedforward: Feedforward = Feedforward()
    control_rate: float = Field(config.DEFAULT_CONTROL_RATE_HZ, gt=0)

    @model_validator(mode="after")
    def _regulator_matches_frame(self):
        if self.frame is Frame.DQ and not isinstance(self.regulator, PIRegulator):
            raise ValueError("DQ frame uses a PI regulator")
        if self.frame is Frame.ALPHA_BETA and not isinstance(self.regulator, PRRegulator):
            raise ValueError("AlphaBeta frame uses a PR regulator")
        return self


# ---------------------------------------------------------------------------
# Frequency-domain containers
# ---------------------------------------------------------------------------

class FrequencyGrid(_Spec):
    """Logarithmically spaced frequency grid in Hz."""
    f_min: float = Field(gt=0)
    f_max: float = Field(gt=0)
    points: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.points >= 2 and not self.f_min < self.f_max:
            raise ValueError("f_min must be below f_max")
        return self

    def frequencies(self):
        if self.points == 1:
            return np.array([self.f_min])
        return np.geomspace(self.f_min, self.f_max, self.points)


@dataclass(frozen=True, eq=False)
class ImpedanceCurve:
    """Complex samples Z(j 2 pi f). Gaps (open circuits, failed points) hold 0."""
    frequencies: np.ndarray
    values: np.ndarray
    gaps: Optional[np.ndarray] = None
    label: str = ""
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=complex).reshape(-1)
        gaps = (np.zeros(freqs.shape, dtype=bool) if self.gaps is None
                else np.asarray(self.gaps, dtype=bool).reshape(-1))
        if not (freqs.shape == values.shape == gaps.shape):
            raise ValueError("frequencies, values and gaps must have equal lengths")
        if freqs.size and (np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0)):
            raise ValueError("frequencies must be positive and strictly increasing")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(freqs)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "notes", tuple(self.notes))

    def __len__(self):
        return self.frequencies.size

    @property
    def has_gaps(self):
        return bool(self.gaps.any())

    def without_gaps(self):
        keep = ~self.gaps
        return ImpedanceCurve(self.frequencies[keep], self.values[keep],
                              label=self.label, notes=self.notes)

    def relabel(self, label):
        return ImpedanceCurve(self.frequencies, self.values, self.gaps, label, self.notes)

    def magnitude_db(self):
        return 20.0 * np.log10(np.abs(self.values))

    def phase_deg(self, unwrap=True):
        phase = np.angle(self.values)
        if unwrap:
            phase = np.unwrap(phase)
        return np.degrees(phase)


@dataclass(frozen=True)
class OperatingPoint:
    I_d: float
    I_q: float
    D_d: float
    D_q: float

    @property
    def modulation_index(self):
        return math.hypot(self.D_d, self.D_q)


# ---------------------------------------------------------------------------
# Transforms (work on scalars and numpy arrays alike)
# ---------------------------------------------------------------------------

def clarke(a, b, c):
    alpha = (2.0 * a - b - c) / 3.0
    beta = (b - c) / SQRT3
    return alpha, beta


def inverse_clarke(alpha, beta):
    """Zero-sequence-free inverse of the amplitude-invariant Clarke transform."""
    a = alpha
    b = -0.5 * alpha + 0.5 * SQRT3 * beta
    c = -0.5 * alpha - 0.5 * SQRT3 * beta
    return a, b, c


def park(alpha, beta, theta):
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    d = alpha * cos_t + beta * sin_t
    q = -alpha * sin_t + beta * cos_t
    return d, q


def inverse_park(d, q, theta):
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    alpha = d * cos_t - q * sin_t
    beta = d * sin_t + q * cos_t
    return alpha, beta


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------

def _check_s(s, operation):
    if s == 0:
        raise DegenerateFrequency("transfer function evaluated at s = 0",
                                  module="model_core", operation=operation,
                                  frequency_hz=0.0)


def pi_tf(regulator, s):
    _check_s(s, "pi_tf")
    if math.isinf(regulator.tau_i):
        return complex(regulator.k_p)
    return regulator.k_p * (1.0 + 1.0 / (regulator.tau_i * s))


def pr_tf(regulator, s):
    s = complex(s)
    w_r = regulator.resonant_frequency
    return regulator.k_p + regulator.k_r * s / (s * s + 2.0 * regulator.damping * s + w_r * w_r)


def regulator_tf(regulator, s):
    if isinstance(regulator, PIRegulator):
        return pi_tf(regulator, s)
    return pr_tf(regulator, s)


def feedforward_tf(feedforward, s):
    """Transfer from DC-link perturbation to the DC voltage used in the duty
    division: 1 sensed, 0 constant, first-order low-pass when filtered."""
    if feedforward.mode is FeedforwardMode.IDEAL:
        return 1.0 + 0.0j
    if feedforward.mode is FeedforwardMode.CONSTANT:
        return 0.0j
    return 1.0 / (1.0 + complex(s) / (2.0 * math.pi * feedforward.bandwidth_hz))


def pi_for_bandwidth(filter_inductance, bandwidth_hz):
    """PI giving a current-loop bandwidth of bandwidth_hz on an L plant, with
    tau_i = 4 L / k_p (critically damped closed loop)."""
    k_p = 2.0 * math.pi * bandwidth_hz * filter_inductance
    return PIRegulator(k_p=k_p, tau_i=4.0 * filter_inductance / k_p)


def pr_equivalent_of(pi, omega0=config.DEFAULT_OMEGA0):
    """Stationary-frame PR with the same loop gain around the fundamental as
    the synchronous-frame PI (k_r = 2 k_p / tau_i)."""
    return PRRegulator(k_p=pi.k_p, k_r=2.0 * pi.k_p / pi.tau_i,
                       resonant_frequency=omega0)


# ---------------------------------------------------------------------------
# Operating point
# ---------------------------------------------------------------------------

def check_design(design):
    """Re-checks field invariants (instances built with model_construct skip
    pydantic validation)."""
    checks = {
        "v_dc_nominal": design.v_dc_nominal > 0,
        "p_out": design.p_out >= 0,
        "efficiency": 0 < design.efficiency <= 1,
        "filter_inductance": design.filter_inductance > 0,
        "filter_resistance": design.filter_resistance >= 0,
        "dc_capacitance": design.dc_capacitance > 0,
        "dc_cap_esr": design.dc_cap_esr >= 0,
        "switching_frequency": design.switching_frequency > 0,
        "grid.phase_voltage_amplitude": design.grid.phase_voltage_amplitude > 0,
        "grid.fundamental_angular_frequency": design.grid.fundamental_angular_frequency > 0,
    }
    for name, ok in checks.items():
        if not ok:
            raise InvalidDesign("field invariant violated", module="model_core",
                                operation="check_design", field=f"design.{name}")


def solve_operating_point(design):
    """Steady state at unity power factor: I_q = 0, I_d = 2 P_o / (3 v_gd),
    duties from the dq KVL equations."""
    check_design(design)
    v_gd = design.v_gd
    v_i = design.v_dc_nominal
    i_d = 2.0 * design.p_out / (3.0 * v_gd)
    i_q = 0.0
    d_d = (v_gd + design.filter_resistance * i_d) / v_i
    d_q = design.omega0 * design.filter_inductance * i_d / v_i
    op = OperatingPoint(I_d=i_d, I_q=i_q, D_d=d_d, D_q=d_q)
    if op.modulation_index > 1.0:
        raise InfeasibleOperatingPoint(
            f"modulation index {op.modulation_index:.4f} exceeds 1",
            module="model_core", operation="solve_operating_point")
    return op


def dc_port_power(design, op):
    """DC power drawn by the bridge at the operating point."""
    return 1.5 * design.v_dc_nominal * (op.I_d * op.D_d + op.I_q * op.D_q)
