"""Exception hierarchy shared by all torusflow modules."""


class TorusflowError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(TorusflowError, ValueError):
    """Invalid lattice, grid, forcing or experiment configuration."""


class DomainError(TorusflowError, ValueError):
    """Argument outside the domain of a closed-form function."""


class LiftAmbiguityError(TorusflowError):
    """Consecutive torus points too far apart to lift uniquely."""


class NonPositiveForcingError(TorusflowError, ValueError):
    """Forcing term is not strictly positive on the torus."""


class GeometryError(TorusflowError):
    """Embedding is not a valid star-shaped radial graph."""


class DecompositionError(TorusflowError):
    """Center/graph split failed to contract."""


class ContractViolation(TorusflowError, ValueError):
    """Operator applied to data outside its admissible subspace."""


class NonMorseError(TorusflowError):
    """Function has a degenerate critical point."""


class NotLocallyConvexError(TorusflowError):
    """Some principal curvature is non-positive."""


class DichotomyError(TorusflowError):
    """Discrete linearized operator has an unexpected kernel."""


class SolverError(TorusflowError):
    """An iterative solver failed to converge."""
