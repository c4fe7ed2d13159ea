'''Utility functions for parsing, Bode-axis resampling and file output.'''
import os
import tempfile

import numpy as np

from vsc_impedance.errors import IoFailure, NoOverlap


def safe_float(value, default=np.nan):
    """Safely convert value to float, return default (np.nan) if conversion fails."""
    if value is None or str(value).strip() == "":
        return default
    try:
        return float(str(value).strip())
    except (ValueError, TypeError):
        return default


def parse_grid_triplet(text):
    """Parses 'fmin,fmax,n' into (f_min, f_max, points); None on failure."""
    parts = [p for p in str(text).split(",")]
    if len(parts) != 3:
        return None
    f_min, f_max = safe_float(parts[0]), safe_float(parts[1])
    points = safe_float(parts[2])
    if np.isnan(f_min) or np.isnan(f_max) or np.isnan(points) or points != int(points):
        return None
    return f_min, f_max, int(points)


def parse_key_values(text):
    """Parses 'a=1,b=2e-3' into {'a': 1.0, 'b': 0.002}; non-numeric values stay strings."""
    params = {}
    for item in filter(None, (p.strip() for p in str(text).split(","))):
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        number = safe_float(raw)
        params[key.strip()] = raw.strip() if np.isnan(number) else number
    return params


def wrap_deg(angle_deg):
    """Wraps degrees into (-180, 180]."""
    wrapped = np.mod(np.asarray(angle_deg, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(wrapped == -180.0, 180.0, wrapped)


def overlap_frequencies(*curves):
    """Union of the curves' sample frequencies inside their common range."""
    lo = max(c.frequencies[0] for c in curves)
    hi = min(c.frequencies[-1] for c in curves)
    if lo > hi:
        raise NoOverlap(f"curves do not overlap ({lo:.6g} Hz > {hi:.6g} Hz)",
                        module="utils", operation="overlap_frequencies")
    merged = np.unique(np.concatenate([c.frequencies for c in curves]))
    return merged[(merged >= lo) & (merged <= hi)]


def resample_log(curve, frequencies):
    """Interpolates log-magnitude and unwrapped phase linearly in log-frequency.
    Gap samples are dropped before interpolating. Returns complex values."""
    clean = curve.without_gaps()
    if len(clean) == 0:
        raise NoOverlap("curve has no valid samples", module="utils", operation="resample_log")
    target = np.asarray(frequencies, dtype=float)
    if len(clean) == 1:
        return np.full(target.shape, clean.values[0], dtype=complex)
    log_f = np.log10(clean.frequencies)
    tiny = np.finfo(float).tiny
    log_mag = np.log(np.maximum(np.abs(clean.values), tiny))
    phase = np.unwrap(np.angle(clean.values))
    x = np.log10(target)
    return np.exp(np.interp(x, log_f, log_mag) + 1j * np.interp(x, log_f, phase))


def atomic_write(path, write_fn, mode="w"):
    """Writes through a temporary file in the target directory and renames it
    into place, so a failure never leaves a partial file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}", module="utils", operation="atomic_write") from e
    try:
        encoding = None if "b" in mode else "utf-8"
        with os.fdopen(fd, mode, encoding=encoding, newline="" if encoding else None) as handle:
            write_fn(handle)
        os.replace(tmp_path, path)
    except Exception as e:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        if isinstance(e, IoFailure):
            raise
        raise IoFailure(f"cannot write {path}: {e}", module="utils", operation="atomic_write") from e
