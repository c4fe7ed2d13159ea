'''Reduced input impedance: constant-power-load resistance in parallel with the
DC-link capacitor.'''
from dataclasses import dataclass
from typing import Optional

import numpy as np

from vsc_impedance.errors import ResonantSingularity, ZeroPower
from vsc_impedance.model_core import ImpedanceCurve


@dataclass(frozen=True)
class ReducedModel:
    r_cpl: float
    c_i: float
    # Optional capacitor ESR; beyond the plain CPL || C form, needed for
    # hardware with a datasheet R_cin.
    esr: Optional[float] = None

    def __post_init__(self):
        if not self.r_cpl < 0:
            raise ValueError("r_cpl must be negative")
        if not self.c_i > 0:
            raise ValueError("c_i must be positive")

    @classmethod
    def from_design(cls, design, with_esr=False):
        esr = design.dc_cap_esr if with_esr and design.dc_cap_esr > 0 else None
        return cls(r_cpl=r_cpl(design), c_i=design.dc_capacitance, esr=esr)


def r_cpl(design):
    """R_CPL = -V_i^2 * eta / P_o."""
    if design.p_out == 0:
        raise ZeroPower("no constant-power resistance at zero power",
                        module="reduced_model", operation="r_cpl", field="design.p_out")
    return -design.v_dc_nominal ** 2 * design.efficiency / design.p_out


def reduced_total_impedance(model, s):
    s = complex(s)
    if model.esr is None:
        denominator = 1.0 + model.r_cpl * model.c_i * s
        if abs(denominator) < 1e-15:
            raise ResonantSingularity("1 + R_CPL C_i s vanishes", module="reduced_model",
                                      operation="reduced_total_impedance",
                                      frequency_hz=abs(s.imag) / (2 * np.pi))
        return model.r_cpl / denominator
    if s == 0:
        return complex(model.r_cpl)
    z_c = model.esr + 1.0 / (model.c_i * s)
    total = model.r_cpl + z_c
    if abs(total) < 1e-15 * abs(model.r_cpl):
        raise ResonantSingularity("R_CPL + Z_C vanishes", module="reduced_model",
                                  operation="reduced_total_impedance",
                                  frequency_hz=abs(s.imag) / (2 * np.pi))
    return model.r_cpl * z_c / total


def sweep_reduced(model, grid):
    freqs = grid.frequencies()
    values = [reduced_total_impedance(model, 2j * np.pi * f) for f in freqs]
    return ImpedanceCurve(freqs, np.array(values), label="Z_iT reduced")
