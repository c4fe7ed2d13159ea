'''Software frequency-response analyzer.

Single-tone phasors are taken with the Goertzel recursion over a window
trimmed to an integer number of periods of the target tone. The impedance at
the perturbation frequency is V(v_dc) / I(i_dc_port), port current positive
into the converter.
'''
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import signal
from tqdm import tqdm

from vsc_impedance import config
from vsc_impedance.averaged_sim import SimConfig, SourceSpec, simulate, source_emf
from vsc_impedance.errors import (InvalidSimConfig, LowSignal, MalformedCapture,
                                  NonCoherentWindow, NumericalFailure)
from vsc_impedance.model_core import ImpedanceCurve

logger = logging.getLogger(__name__)

CAPTURE_COLUMNS = ("t_s", "v_V", "i_A")
# Simulator traces are accepted as captures too.
TRACE_ALIASES = {"v_dc_V": "v_V", "i_dc_port_A": "i_A"}


def coherent_window(n_available, sample_rate, f_target):
    """Returns (n_samples, periods): the longest window of at most n_available
    samples spanning an integer number (>= 5) of periods of f_target with the
    implied frequency within 0.1 % of f_target."""
    if f_target <= 0 or sample_rate <= 0:
        raise NonCoherentWindow("target frequency and sample rate must be positive",
                                module="fra_extract", operation="coherent_window")
    samples_per_period = sample_rate / f_target
    for periods in range(int(n_available / samples_per_period), config.MIN_MEASUREMENT_PERIODS - 1, -1):
        n = int(round(periods * samples_per_period))
        if n > n_available or n < 2:
            continue
        implied = periods * sample_rate / n
        if abs(implied - f_target) <= config.COHERENCE_TOLERANCE * f_target:
            return n, periods
    raise NonCoherentWindow(
        f"no window of >= {config.MIN_MEASUREMENT_PERIODS} whole periods in {n_available} samples",
        module="fra_extract", operation="coherent_window", frequency_hz=f_target)


def _goertzel_sum(x, w):
    """sum_n x[n] exp(-j w n), evaluated with the second-order Goertzel recursion."""
    n = x.size
    s = signal.lfilter([1.0], [1.0, -2.0 * math.cos(w), 1.0], x)
    s_last = s[-1]
    s_prev = s[-2] if n > 1 else 0.0
    return np.exp(-1j * w * (n - 1)) * (s_last - np.exp(-1j * w) * s_prev)


def goertzel_phasor(samples, sample_rate, f_target):
    """Peak phasor of the f_target component of the trailing coherent window:
    A sin(2 pi f t + phi) -> A exp(j phi). The window mean is removed first."""
    x = np.asarray(samples, dtype=float)
    n, _ = coherent_window(x.size, sample_rate, f_target)
    return _phasor_of_window(x[-n:], sample_rate, f_target)


def _phasor_of_window(window, sample_rate, f_target):
    x = window - window.mean()
    w = 2.0 * math.pi * f_target / sample_rate
    return complex(2j * _goertzel_sum(x, w) / x.size)


def _snr_db(window, sample_rate, f_target, tone):
    """Tone-to-neighbour ratio. The neighbours sit one bin (sample_rate / n)
    either side of the tone, where its own window response is zero."""
    n = window.size
    spacing = sample_rate / n
    noise = config.NOISE_FLOOR_ABS
    for neighbour in (f_target - spacing, f_target + spacing):
        if neighbour > 0:
            noise = max(noise, abs(_phasor_of_window(window, sample_rate, neighbour)))
    if tone == 0:
        return -math.inf
    return 20.0 * math.log10(abs(tone) / noise)


def impedance_from_samples(v, i, sample_rate, f_p):
    """Z = V / I at f_p over the trailing coherent window of both channels."""
    v = np.asarray(v, dtype=float)
    i = np.asarray(i, dtype=float)
    n, _ = coherent_window(min(v.size, i.size), sample_rate, f_p)
    v_win, i_win = v[-n:], i[-n:]
    v_hat = _phasor_of_window(v_win, sample_rate, f_p)
    i_hat = _phasor_of_window(i_win, sample_rate, f_p)
    snr = _snr_db(i_win, sample_rate, f_p, i_hat)
    if snr < config.LOW_SIGNAL_DB:
        raise LowSignal(f"port current SNR {snr:.1f} dB below {config.LOW_SIGNAL_DB:.0f} dB",
                        module="fra_extract", operation="impedance_from_samples", frequency_hz=f_p)
    return v_hat / i_hat


def settle_time(design, f_p):
    return max(config.SETTLE_MIN_S,
               config.SETTLE_FUNDAMENTAL_PERIODS * 2.0 * math.pi / design.omega0,
               config.SETTLE_INJECTION_PERIODS / f_p)


def measurement_time(f_p):
    return max(config.MIN_MEASUREMENT_PERIODS / f_p, config.MIN_MEASUREMENT_S)


def extract_impedance_at(design, ctrl, f_p, amplitude=None, source=None, sim=None, settle_s=None):
    """Simulates with a sinusoidal source perturbation at f_p and returns the
    measured port impedance. On LowSignal the amplitude doubles, up to 10 % of
    the source voltage."""
    if f_p <= 0:
        raise InvalidSimConfig("perturbation frequency must be positive",
                               module="fra_extract", operation="extract_impedance_at")
    ceiling = config.AVERAGED_MODEL_CEILING_FRACTION * design.switching_frequency
    if f_p > ceiling:
        logger.warning("%.6g Hz is above the averaged-model ceiling %.6g Hz", f_p, ceiling)
    source = source or SourceSpec()
    sim = sim or SimConfig()
    v_src = source_emf(design, source)
    amp = config.DEFAULT_INJECTION_FRACTION * v_src if amplitude is None else amplitude
    settle = settle_time(design, f_p) if settle_s is None else settle_s
    duration = settle + measurement_time(f_p) + 1.0 / ctrl.control_rate
    run_cfg = sim.model_copy(update={"duration": duration})

    while True:
        trace = simulate(design, ctrl, source.with_injection(f_p, amp), run_cfg)
        keep = trace.time >= settle
        try:
            z = impedance_from_samples(trace.v_dc[keep], trace.i_dc_port[keep],
                                       trace.sample_rate, f_p)
        except LowSignal:
            next_amp = amp * config.INJECTION_RETRY_FACTOR
            if amp == 0 or next_amp > config.INJECTION_RETRY_CEILING_FRACTION * v_src:
                raise
            logger.warning("Low signal at %.6g Hz, raising injection to %.4g V", f_p, next_amp)
            amp = next_amp
            continue
        logger.debug("FRA %.6g Hz: |Z| = %.6g ohm, phase = %.2f deg",
                     f_p, abs(z), math.degrees(np.angle(z)))
        return z


def sweep_fra(design, ctrl, grid, jobs=1, source=None, sim=None, amplitude=None,
              progress=False, label="Z_iT FRA"):
    """Pointwise extract_impedance_at over grid; per-point numerical failures
    become gaps."""
    freqs = grid.frequencies()
    ceiling = config.AVERAGED_MODEL_CEILING_FRACTION * design.switching_frequency
    if freqs[-1] > ceiling:
        logger.warning("Sweep reaches %.6g Hz, above the averaged-model ceiling %.6g Hz",
                       freqs[-1], ceiling)
    logger.info("FRA sweep: %d points, %.4g-%.4g Hz, %d job(s)", freqs.size, freqs[0], freqs[-1], jobs)

    def point(f_hz):
        try:
            return extract_impedance_at(design, ctrl, f_hz, amplitude, source, sim), None
        except NumericalFailure as err:
            return None, err

    iterator = tqdm(freqs, desc="FRA sweep", unit="pt", disable=not progress)
    if jobs == 1:
        results = [point(f) for f in iterator]
    else:
        results = Parallel(n_jobs=jobs)(delayed(point)(f) for f in iterator)

    values = np.zeros(freqs.size, dtype=complex)
    gaps = np.zeros(freqs.size, dtype=bool)
    notes = []
    for k, (z, err) in enumerate(results):
        if err is not None:
            gaps[k] = True
            notes.append(f"{freqs[k]:.6g} Hz: {err}")
            logger.warning("FRA sweep gap at %.6g Hz: %s", freqs[k], err)
        else:
            values[k] = z
    return ImpedanceCurve(freqs, values, gaps, label=label, notes=tuple(notes))


def _uniform_rate(t, operation):
    if t.size < 2:
        raise MalformedCapture("capture needs at least two samples",
                               module="fra_extract", operation=operation)
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise MalformedCapture("time must be strictly increasing",
                               module="fra_extract", operation=operation)
    mean_step = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(steps - mean_step)) > 1e-6 * mean_step:
        raise MalformedCapture("time base is not uniform within 1 ppm",
                               module="fra_extract", operation=operation)
    return 1.0 / mean_step


def capture_from_arrays(t, v, i, f_p):
    t = np.asarray(t, dtype=float)
    return impedance_from_samples(v, i, _uniform_rate(t, "capture_from_arrays"), f_p)


def capture_from_trace(trace, f_p, settle_s=0.0):
    keep = trace.time >= settle_s
    return impedance_from_samples(trace.v_dc[keep], trace.i_dc_port[keep], trace.sample_rate, f_p)


def process_capture(path, f_p):
    """Reads a `t_s,v_V,i_A` capture (or a simulator trace CSV) and returns Z at f_p."""
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise MalformedCapture(f"cannot read capture {path}: {e}",
                               module="fra_extract", operation="process_capture") from e
    frame = frame.rename(columns={k: v for k, v in TRACE_ALIASES.items() if v not in frame.columns})
    missing = [c for c in CAPTURE_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedCapture(f"capture is missing columns {missing}",
                               module="fra_extract", operation="process_capture")
    try:
        data = frame[list(CAPTURE_COLUMNS)].to_numpy(dtype=float)
    except ValueError as e:
        raise MalformedCapture(f"non-numeric capture data: {e}",
                               module="fra_extract", operation="process_capture") from e
    if not np.all(np.isfinite(data)):
        raise MalformedCapture("capture contains missing or non-finite values",
                               module="fra_extract", operation="process_capture")
    t, v, i = data.T
    rate = _uniform_rate(t, "process_capture")
    return impedance_from_samples(v, i, rate, f_p)
