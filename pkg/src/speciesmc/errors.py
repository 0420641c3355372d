"""Exception types shared across the package."""


class SpeciesmcError(Exception):
    """Base class for all package errors."""


class DomainError(SpeciesmcError, ValueError):
    """An argument lies outside the documented domain of an operation."""


class RuleError(SpeciesmcError, RuntimeError):
    """A prediction rule produced an invalid weight vector.

    Carries the step index, the offending total mass and the weight
    components so failures are reproducible.
    """

    def __init__(self, step, total, components=None, message=None):
        self.step = step
        self.total = total
        self.components = components
        msg = message or f"weights at step {step} sum to {total!r}"
        super().__init__(msg)


class WeightError(SpeciesmcError, RuntimeError):
    """A weight process produced a value outside its declared support."""


class ConfigError(SpeciesmcError, ValueError):
    """An experiment configuration is invalid or incomplete."""
