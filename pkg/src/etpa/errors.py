"""Exception and warning types shared by the engine, the oracles and the CLI."""


class EtpaError(Exception):
    """Base class for all errors raised by this package."""


class PhysicsGuardError(EtpaError, ValueError):
    """A requested quantity lies outside the regime where the model is valid."""


class DomainError(PhysicsGuardError):
    """An argument lies outside the mathematical domain of a function."""


class SingularityError(PhysicsGuardError, ZeroDivisionError):
    """A lineshape or cross section diverges for the given parameters."""


class NearResonanceError(PhysicsGuardError):
    """The carrier sits inside the guard band around an intermediate resonance."""


class ComplexDipoleError(PhysicsGuardError):
    """Step-wise pathways were requested for a level system with complex dipole products."""


class DegenerateStateError(PhysicsGuardError):
    """Symmetrization annihilated the two-photon amplitude."""


class ConvergenceError(EtpaError, RuntimeError):
    """A numerical integral did not reach the requested tolerance."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class PhysicsWarning(UserWarning):
    """Base class for validity warnings that travel with computed results."""


class NonIsolatedPairWarning(PhysicsWarning):
    pass


class PerturbativeValidityWarning(PhysicsWarning):
    pass


class GridQualityWarning(PhysicsWarning):
    pass


class ImpulsiveGuardWarning(PhysicsWarning):
    pass


class LargeCouplingRatioWarning(PhysicsWarning):
    pass
