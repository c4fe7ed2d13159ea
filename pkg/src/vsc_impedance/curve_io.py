'''Curve CSV format shared by the sweep, stability and report commands:
header `f_hz,re_ohm,im_ohm`, one sample per line, strictly increasing f.
Gap samples are not written.'''
import logging

import numpy as np
import pandas as pd

from vsc_impedance import config
from vsc_impedance.errors import IoFailure, MalformedCurveFile
from vsc_impedance.model_core import ImpedanceCurve
from vsc_impedance.utils import atomic_write

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["f_hz", "re_ohm", "im_ohm"]


def curve_to_frame(curve):
    clean = curve.without_gaps()
    return pd.DataFrame({"f_hz": clean.frequencies, "re_ohm": clean.values.real,
                         "im_ohm": clean.values.imag}, columns=CURVE_COLUMNS)


def emit_csv(curve, path):
    if len(curve.without_gaps()) == 0:
        raise IoFailure("refusing to write an empty curve", module="compare_report",
                        operation="emit_csv")
    frame = curve_to_frame(curve)
    atomic_write(path, lambda handle: frame.to_csv(handle, index=False,
                                                   float_format=config.CSV_FLOAT_FORMAT))
    logger.info("Wrote %d samples of '%s' to %s", len(frame), curve.label, path)


def read_curve_csv(path, label=None):
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise MalformedCurveFile(f"cannot read curve {path}: {e}",
                                 module="compare_report", operation="read_curve_csv") from e
    if list(frame.columns) != CURVE_COLUMNS:
        raise MalformedCurveFile(f"expected header {','.join(CURVE_COLUMNS)}, got {','.join(map(str, frame.columns))}",
                                 module="compare_report", operation="read_curve_csv")
    try:
        data = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise MalformedCurveFile(f"non-numeric curve data in {path}",
                                 module="compare_report", operation="read_curve_csv") from e
    if data.shape[0] == 0:
        raise MalformedCurveFile(f"{path} holds no samples",
                                 module="compare_report", operation="read_curve_csv")
    try:
        return ImpedanceCurve(data[:, 0], data[:, 1] + 1j * data[:, 2],
                              label=label if label is not None else str(path))
    except ValueError as e:
        raise MalformedCurveFile(f"{path}: {e}", module="compare_report",
                                 operation="read_curve_csv") from e
