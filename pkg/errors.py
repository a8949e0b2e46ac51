"""Exceptions raised across the spectra pipeline."""


class SpectraError(Exception):
    """Base class for every error this project raises on purpose."""


class DimensionMismatch(SpectraError, ValueError):
    pass


class DefectiveMatrix(SpectraError):
    """Eigenvector matrix too ill-conditioned to treat the input as diagonalizable."""

    def __init__(self, condition):
        super().__init__(f"eigenvector condition number {condition:.3e} exceeds limit; matrix is numerically defective")
        self.condition = condition


class NonHermitianInput(SpectraError, ValueError):
    pass


class NoSteadyState(SpectraError):
    pass


class MultipleSteadyStates(SpectraError):
    def __init__(self, count):
        super().__init__(f"{count} eigenvalues pass the steady-state threshold; kernel is degenerate")
        self.count = count


class InvalidDensityMatrix(SpectraError):
    pass


class NegativeTime(SpectraError, ValueError):
    pass


class NonPositiveTime(SpectraError, ValueError):
    pass


class EqualTimes(SpectraError, ValueError):
    pass


class UnsupportedOrder(SpectraError, ValueError):
    pass


class ImaginaryResidue(SpectraError):
    def __init__(self, value, bound):
        super().__init__(f"imaginary residue {abs(value.imag):.3e} exceeds bound {bound:.3e}")
        self.value = value


class StabilityViolation(SpectraError, ValueError):
    pass


class StateBlowup(SpectraError):
    def __init__(self, step, norm):
        super().__init__(f"state norm {norm:.3e} at step {step}; reduce dt")
        self.step = step
        self.norm = norm


class FrameError(SpectraError, ValueError):
    pass


class ConfigError(SpectraError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class UndampedMode(SpectraError):
    """A non-steady eigenvalue without negative real part; resolvents would diverge."""


class NotTracePreserving(SpectraError):
    pass
