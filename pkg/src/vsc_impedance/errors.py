'''Exception hierarchy for the impedance toolkit.

Two families map onto command-line exit codes: ValidationFailure (2) for bad
inputs and NumericalFailure (3) for problems found while computing.
AcceptanceFailure (4) is raised only by the scenario runner.
'''


class ImpedanceToolkitError(Exception):
    """Base error. Carries the module/operation that raised it and, when
    known, the offending frequency or config field."""

    exit_code = 1

    def __init__(self, message, module=None, operation=None,
                 frequency_hz=None, field=None):
        self.message = message
        self.module = module
        self.operation = operation
        self.frequency_hz = frequency_hz
        self.field = field
        super().__init__(self._render())

    def _render(self):
        where = ".".join(part for part in (self.module, self.operation) if part)
        text = f"[{where}] {self.message}" if where else self.message
        if self.field is not None:
            text += f" (field: {self.field})"
        if self.frequency_hz is not None:
            text += f" (at {self.frequency_hz:.6g} Hz)"
        return text

    def add_context(self, prefix):
        """Prefixes the message in place (used to attribute errors to a scenario)."""
        self.message = f"{prefix}: {self.message}"
        self.args = (self._render(),)
        return self



class ValidationFailure(ImpedanceToolkitError):
    exit_code = 2


class NumericalFailure(ImpedanceToolkitError):
    exit_code = 3


class AcceptanceFailure(ImpedanceToolkitError):
    exit_code = 4


# --- validation family ---

class InvalidDesign(ValidationFailure):
    pass


class ConfigError(ValidationFailure):
    pass


class InfeasibleOperatingPoint(ValidationFailure):
    pass


class InvalidSimConfig(ValidationFailure):
    pass


class UnsupportedFrame(ValidationFailure):
    pass


class ZeroPower(ValidationFailure):
    pass


class NoOverlap(ValidationFailure):
    pass


class MalformedCapture(ValidationFailure):
    pass


class MalformedCurveFile(ValidationFailure):
    pass


class IoFailure(ValidationFailure):
    pass


# --- numerical family ---

class DegenerateFrequency(NumericalFailure):
    pass


class SingularSystem(NumericalFailure):
    pass


class InfiniteImpedance(NumericalFailure):
    """Zero small-signal bridge current: the point is an open circuit."""


class ResonantSingularity(NumericalFailure):
    pass


class NumericalDivergence(NumericalFailure):
    pass


class ModulationSaturation(NumericalFailure):
    def __init__(self, message, first_violation_s=None, **kwargs):
        self.first_violation_s = first_violation_s
        super().__init__(message, **kwargs)


class NonCoherentWindow(NumericalFailure):
    pass


class LowSignal(NumericalFailure):
    pass


class RefineGridNeeded(NumericalFailure):
    pass


class PointOnContour(NumericalFailure):
    pass


class DivisionByOpenCircuit(NumericalFailure):
    pass
