"""Exception hierarchy shared across the package.

User/configuration problems derive from :class:`UserInputError`; failures
inside a running engine derive from :class:`EngineError`. The CLI maps the
former to exit code 2 and the latter to exit code 3.
"""

from __future__ import annotations


class SolvSearchError(Exception):
    """Base class for all package exceptions."""


class UserInputError(SolvSearchError):
    """Bad input data, configuration, or CLI arguments."""


class EngineError(SolvSearchError):
    """Failure inside a running search/optimization engine."""


# -- library ingestion ------------------------------------------------------

class ParseError(UserInputError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class DuplicateName(ParseError):
    pass


class InvalidHsp(ParseError):
    pass


class UnknownSolvent(UserInputError):
    def __init__(self, name: str, suggestions: list[str] | None = None):
        self.name = name
        self.suggestions = suggestions or []
        hint = f" (did you mean: {', '.join(self.suggestions)}?)" if self.suggestions else ""
        super().__init__(f"unknown solvent {name!r}{hint}")


# -- ratio optimization -----------------------------------------------------

class MissingKineticsData(UserInputError):
    """A kinetics weight is active but a component lacks the needed field."""

    def __init__(self, field: str, names: list[str]):
        self.field = field
        self.names = names
        super().__init__(f"kinetics term needs {field} for: {', '.join(names)}")


class NonFiniteLoss(EngineError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"loss became non-finite at gradient step {step}")


class DiscretizationInfeasible(EngineError):
    """Engineering discretization broke a structural constraint.

    Carries the post-rounding formulation (when one exists) so callers can
    still report it alongside the failed checks.
    """

    def __init__(self, reason: str, formulation=None, failed: list[str] | None = None):
        self.formulation = formulation
        self.failed = failed or []
        super().__init__(reason)


class HardConstraintViolation(EngineError):
    """Discretized recipe failed a hard physical constraint re-check."""

    def __init__(self, failed: list[str], formulation=None):
        self.failed = failed
        self.formulation = formulation
        super().__init__(f"hard constraint(s) failed: {', '.join(failed)}")


# -- proposal generation ----------------------------------------------------

class GeneratorFailure(EngineError):
    pass


class NoFeasibleProposal(GeneratorFailure):
    """Exclusion rules emptied the candidate set."""


class DuplicateProposal(GeneratorFailure):
    """Generator kept proposing an already-present sibling topology."""

    def __init__(self, topology, attempts: int):
        self.topology = topology
        self.attempts = attempts
        super().__init__(
            f"duplicate proposal {sorted(topology)} after {attempts} attempts"
        )


class InvalidProposal(EngineError):
    """A generated proposal violates the proposal invariants."""


# -- remote service ---------------------------------------------------------

class TransportError(EngineError):
    def __init__(self, message: str, retries: int = 0):
        self.retries = retries
        super().__init__(f"{message} (after {retries} retries)")


class MalformedResponse(EngineError):
    pass


# -- search -----------------------------------------------------------------

class ExhaustedTree(EngineError):
    """Every reachable node is fully expanded at the depth bound."""


# -- memory -----------------------------------------------------------------

class StorageError(EngineError):
    pass


class RecordValidationError(UserInputError):
    pass


# -- metrics ----------------------------------------------------------------

class EmptyTrace(UserInputError):
    pass


# -- configuration ----------------------------------------------------------

class ConfigError(UserInputError):
    """Bad run-config value; carries the offending key path."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")
