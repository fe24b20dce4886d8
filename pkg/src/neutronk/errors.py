"""Exception types shared across the package."""


class NeutronkError(Exception):
    pass


class ConfigError(NeutronkError, ValueError):
    """The configuration document is malformed or has unknown keys."""


class AssumptionError(NeutronkError, ValueError):
    """A model violates one of the standing assumptions H1-H5 or a mass check."""


class DomainError(NeutronkError, ValueError):
    """A phase point lies outside D x V."""


class PopulationCapError(NeutronkError, RuntimeError):
    """A branching simulation exceeded its population cap."""


class ExtinctionError(NeutronkError, RuntimeError):
    """The census died out."""


class ConvergenceError(NeutronkError, RuntimeError):
    pass
