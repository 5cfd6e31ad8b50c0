"""Error types raised by the simulation core.

Validation of user-supplied specs and scenarios goes through Django's
``ValidationError``; the classes here cover contract violations inside the
pure functions and runtime failures of a simulation.
"""


class ContractViolation(ValueError):
    """An argument outside the documented domain of a pure function."""


class FlopOverflow(ContractViolation):
    pass


class UndefinedIntensity(ContractViolation):
    """Arithmetic intensity requested for a demand without memory traffic."""


class UndefinedCorrelation(ContractViolation):
    pass


class OverlappingIntervals(ContractViolation):
    pass


class SimulationError(RuntimeError):
    pass


class SimulationStall(SimulationError):
    def __init__(self, kernel_id):
        self.kernel_id = kernel_id
        super().__init__(f'kernel "{kernel_id}" cannot make progress (all rates are zero)')


class ScenarioMismatch(ContractViolation):
    """Two scenarios compared against each other run on different GPU specs."""
