'''Interconnection stability from source and load impedance curves.

The minor-loop gain T = Z_source / Z_load is judged three ways: the
Middlebrook small-gain condition, gain/phase margins at the crossings, and
the winding number of the sampled Nyquist contour about -1. Right-half-plane
poles of T are assumed absent; that premise is not checked here.
'''
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from vsc_impedance import config
from vsc_impedance.curve_io import read_curve_csv
from vsc_impedance.errors import (DivisionByOpenCircuit, InvalidDesign,
                                  PointOnContour, RefineGridNeeded)
from vsc_impedance.model_core import FrequencyGrid, ImpedanceCurve
from vsc_impedance.utils import overlap_frequencies, resample_log, wrap_deg

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


@dataclass(frozen=True)
class MiddlebrookResult:
    ok: bool
    margin_db: float
    peak_gain_db: float
    violations: tuple = ()  # (f_lo, f_hi) bands where |T| breaks the margin

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class MarginResult:
    gain_margin_db: float
    phase_margin_deg: float
    gain_crossovers_hz: tuple = ()
    phase_margins_deg: tuple = ()
    phase_crossovers_hz: tuple = ()
    gain_margins_db: tuple = ()

    @property
    def has_crossover(self):
        return bool(self.gain_crossovers_hz) or bool(self.phase_crossovers_hz)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    minor_loop: ImpedanceCurve
    gain_margin_db: float
    phase_margin_deg: float
    crossover_frequencies: tuple
    winding_number: int
    middlebrook_ok: bool
    verdict: Verdict
    margins: MarginResult = None
    middlebrook: MiddlebrookResult = None
    notes: tuple = field(default_factory=tuple)

    def to_text(self):
        lines = [
            f"verdict: {self.verdict.value}",
            f"winding number about -1: {self.winding_number}",
            f"middlebrook (margin {self.middlebrook.margin_db:g} dB): "
            f"{'pass' if self.middlebrook_ok else 'fail'}, peak |T| = {self.middlebrook.peak_gain_db:.3f} dB",
            f"gain margin: {self.gain_margin_db:.3f} dB",
            f"phase margin: {self.phase_margin_deg:.3f} deg",
            "gain crossovers [Hz]: " + (", ".join(f"{f:.6g}" for f in self.crossover_frequencies) or "none"),
        ]
        if self.middlebrook.violations:
            lines.append("middlebrook violations [Hz]: " + ", ".join(
                f"{lo:.6g}-{hi:.6g}" for lo, hi in self.middlebrook.violations))
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def minor_loop_gain(z_source, z_load):
    """T = Z_s / Z_L on the union of both grids inside the common range."""
    freqs = overlap_frequencies(z_source, z_load)
    lo, hi = freqs[0], freqs[-1]
    in_range = (z_load.frequencies >= lo) & (z_load.frequencies <= hi)
    bad = in_range & (z_load.gaps | (np.abs(z_load.values) == 0))
    if bad.any():
        raise DivisionByOpenCircuit("load curve has a gap or zero inside the overlap",
                                    module="stability", operation="minor_loop_gain",
                                    frequency_hz=float(z_load.frequencies[bad][0]))
    t = resample_log(z_source, freqs) / resample_log(z_load, freqs)
    return ImpedanceCurve(freqs, t, label=f"T = ({z_source.label}) / ({z_load.label})")


def middlebrook_check(minor_loop, margin_db=config.MIDDLEBROOK_MARGIN_DB):
    """|T| < 10^(-margin_db/20) at every sample; violations grouped into bands."""
    clean = minor_loop.without_gaps()
    mag = np.abs(clean.values)
    limit = 10.0 ** (-margin_db / 20.0)
    bad = mag >= limit
    bands = []
    start = None
    for k, flag in enumerate(bad):
        if flag and start is None:
            start = k
        if start is not None and (not flag or k == bad.size - 1):
            end = k if flag else k - 1
            bands.append((float(clean.frequencies[start]), float(clean.frequencies[end])))
            start = None
    peak = 20.0 * math.log10(mag.max()) if mag.size and mag.max() > 0 else -math.inf
    return MiddlebrookResult(ok=not bands, margin_db=margin_db, peak_gain_db=peak,
                             violations=tuple(bands))


def gmpm_margins(minor_loop):
    """Phase margin 180 - |arg T| at each |T| = 1 crossing and gain margin
    -20 log10|T| wherever arg T passes an odd multiple of 180 degrees.
    Headline values are the worst case; inf when nothing crosses."""
    clean = minor_loop.without_gaps()
    f = clean.frequencies
    if f.size == 0:
        return MarginResult(math.inf, math.inf)
    x = np.log10(f)
    y = np.log10(np.maximum(np.abs(clean.values), np.finfo(float).tiny))
    phase = np.degrees(np.unwrap(np.angle(clean.values)))

    gain_xs = []
    on_unity = np.abs(y) <= config.UNITY_GAIN_LOG_TOLERANCE
    for k in range(f.size):
        if on_unity[k]:
            gain_xs.append(x[k])
        elif k + 1 < f.size and not on_unity[k + 1] and y[k] * y[k + 1] < 0:
            gain_xs.append(x[k] - y[k] * (x[k + 1] - x[k]) / (y[k + 1] - y[k]))
    pms = [180.0 - abs(float(wrap_deg(np.interp(xc, x, phase)))) for xc in gain_xs]

    u = (phase + 180.0) / 360.0
    phase_xs = []
    for k in range(f.size):
        if abs(u[k] - round(u[k])) < 1e-12:
            phase_xs.append(x[k])
        elif k + 1 < f.size:
            lo, hi = sorted((u[k], u[k + 1]))
            n = math.floor(lo) + 1
            while n < hi:
                if abs(u[k + 1] - n) > 1e-12:
                    phase_xs.append(x[k] + (n - u[k]) * (x[k + 1] - x[k]) / (u[k + 1] - u[k]))
                n += 1
    gms = [-20.0 * float(np.interp(xc, x, y)) for xc in phase_xs]

    return MarginResult(
        gain_margin_db=min(gms) if gms else math.inf,
        phase_margin_deg=min(pms) if pms else math.inf,
        gain_crossovers_hz=tuple(float(10.0 ** xc) for xc in gain_xs),
        phase_margins_deg=tuple(pms),
        phase_crossovers_hz=tuple(float(10.0 ** xc) for xc in phase_xs),
        gain_margins_db=tuple(gms),
    )


def nyquist_winding(minor_loop):
    """Counter-clockwise winding number of the closed contour
    conj(T(-f...)) + T(f...) about -1."""
    clean = minor_loop.without_gaps()
    w = clean.values + 1.0
    near = np.abs(w) < config.CONTOUR_TOLERANCE
    if near.any():
        raise PointOnContour("minor-loop gain passes through -1",
                             module="stability", operation="nyquist_winding",
                             frequency_hz=float(clean.frequencies[near][0]))
    steps = np.degrees(np.abs(np.angle(w[1:] / w[:-1])))
    if steps.size and steps.max() >= config.MAX_PHASE_STEP_DEG:
        k = int(np.argmax(steps))
        raise RefineGridNeeded(
            f"phase of 1 + T jumps {steps[k]:.1f} deg between samples",
            module="stability", operation="nyquist_winding",
            frequency_hz=float(clean.frequencies[k]))
    # closing segments: conj(w0) -> w0 across DC, w_last -> conj(w_last) at the top
    for end, k in (("lowest", 0), ("highest", -1)):
        closing = 2.0 * abs(math.degrees(np.angle(w[k])))
        if closing >= config.MAX_PHASE_STEP_DEG:
            raise RefineGridNeeded(
                f"contour closure at the {end} frequency turns {closing:.1f} deg; "
                f"extend the grid until 1 + T is near the real axis there",
                module="stability", operation="nyquist_winding",
                frequency_hz=float(clean.frequencies[k]))
    contour = np.concatenate([np.conj(w[::-1]), w, np.conj(w[-1:])])
    total = np.sum(np.angle(contour[1:] / contour[:-1]))
    return int(round(total / (2.0 * math.pi)))


def analyze_stability(z_source, z_load, margin_db=config.MIDDLEBROOK_MARGIN_DB):
    """Minor loop, Middlebrook, margins and winding combined into one verdict:
    Unstable iff the winding number is non-zero, Marginal when a sample sits
    on -1 or a margin is within the marginal thresholds."""
    t = minor_loop_gain(z_source, z_load)
    mb = middlebrook_check(t, margin_db)
    margins = gmpm_margins(t)
    notes = []
    try:
        winding = nyquist_winding(t)
        on_contour = False
    except PointOnContour as err:
        winding = 0
        on_contour = True
        notes.append(str(err))

    gm, pm = margins.gain_margin_db, margins.phase_margin_deg
    thin_gain = math.isfinite(gm) and abs(gm) < config.MARGINAL_GAIN_MARGIN_DB
    thin_phase = math.isfinite(pm) and abs(pm) < config.MARGINAL_PHASE_MARGIN_DEG
    if winding != 0:
        verdict = Verdict.UNSTABLE
    elif on_contour or thin_gain or thin_phase:
        verdict = Verdict.MARGINAL
    else:
        verdict = Verdict.STABLE

    gmpm_stable = gm > 0 and pm > 0
    single_crossover = len(margins.gain_crossovers_hz) <= 1
    if single_crossover and gmpm_stable == (winding != 0) and not on_contour:
        notes.append(f"margins classify the loop as {'stable' if gmpm_stable else 'unstable'} "
                     f"but the winding number is {winding}")
    if not margins.has_crossover:
        notes.append("no gain or phase crossover; margins are infinite")
    logger.info("Stability: %s (winding %d, GM %.3g dB, PM %.3g deg)",
                verdict.value, winding, margins.gain_margin_db, margins.phase_margin_deg)
    return StabilityReport(
        minor_loop=t, gain_margin_db=margins.gain_margin_db,
        phase_margin_deg=margins.phase_margin_deg,
        crossover_frequencies=margins.gain_crossovers_hz, winding_number=winding,
        middlebrook_ok=mb.ok, verdict=verdict, margins=margins, middlebrook=mb,
        notes=tuple(notes))


# ---------------------------------------------------------------------------
# Source impedance fixtures
# ---------------------------------------------------------------------------

SOURCE_KINDS = ("R", "RL", "RLC", "from_file")


def _param(params, name, kind):
    if name not in params:
        raise InvalidDesign(f"{kind} source needs '{name}'", module="stability",
                            operation="build_source_impedance", field=name)
    value = float(params[name])
    if not value > 0 and not (name == "r" and value == 0):
        raise InvalidDesign(f"{kind} source parameter must be positive", module="stability",
                            operation="build_source_impedance", field=name)
    return value


def build_source_impedance(kind, params, grid=None):
    """R, RL (series), RLC ((r + sL) in parallel with 1/(sC), an input
    filter seen from the load) evaluated on grid (a FrequencyGrid or an array
    of frequencies), or a curve CSV for from_file (params["path"])."""
    if kind == "from_file":
        return read_curve_csv(params["path"], label=params.get("label", "Z_s"))
    if kind not in SOURCE_KINDS:
        raise InvalidDesign(f"unknown source kind {kind!r}", module="stability",
                            operation="build_source_impedance", field="kind")
    if grid is None:
        raise InvalidDesign("closed-form sources need a frequency grid", module="stability",
                            operation="build_source_impedance", field="grid")
    f = grid.frequencies() if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    s = 2j * np.pi * f
    r = _param(params, "r", kind)
    if kind == "R":
        z = np.full(f.shape, r, dtype=complex)
    elif kind == "RL":
        z = r + s * _param(params, "l", kind)
    else:
        l = _param(params, "l", kind)
        c = _param(params, "c", kind)
        z = (r + s * l) / (1.0 + s * r * c + s * s * l * c)
    return ImpedanceCurve(f, z, label=f"Z_s {kind}")
