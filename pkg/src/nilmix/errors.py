"""Exception hierarchy shared by all nilmix modules."""


class NilmixError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(NilmixError):
    """Input data (algebra, automorphism, config) failed an exact check."""


class AntisymmetryViolation(ValidationError):
    pass


class JacobiViolation(ValidationError):
    def __init__(self, triple, defect):
        self.triple = triple
        self.defect = defect
        super().__init__(f"Jacobi identity fails for basis triple {triple}: defect {defect}")


class NotNilpotent(ValidationError):
    pass


class BasisNotMalcevOrdered(ValidationError):
    pass


class DimensionMismatch(NilmixError, ValueError):
    pass


class NonFiniteCoordinate(NilmixError, ValueError):
    pass


class BracketNotPreserved(ValidationError):
    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"[Da e{pair[0] + 1}, Da e{pair[1] + 1}] != Da[e{pair[0] + 1}, e{pair[1] + 1}]")


class LatticeNotPreserved(ValidationError):
    def __init__(self, generator, inverse=False):
        self.generator = generator
        self.inverse = inverse
        which = "inverse image" if inverse else "image"
        super().__init__(f"{which} of exp(e{generator + 1}) is not a lattice element")


class NotUnimodular(ValidationError):
    pass


class IllConditioned(NilmixError):
    def __init__(self, message, condition):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3g})")


class ZeroDirection(NilmixError, ValueError):
    pass


class SubspaceRational(NilmixError):
    def __init__(self, relation):
        self.relation = relation
        super().__init__(f"subspace is annihilated by the integer vector {relation}")


class SupportTooLarge(NilmixError, ValueError):
    pass


class SearchBoxTooLarge(NilmixError):
    pass


class TooFewPoints(NilmixError, ValueError):
    pass


class NonPositiveError(NilmixError, ValueError):
    pass


class AllPointsNoiseDominated(NilmixError):
    pass


class NotErgodic(NilmixError):
    pass


class HorizonExceeded(NilmixError, ValueError):
    pass


class NegativeVarianceEstimate(NilmixError):
    pass


class ZeroVariance(NilmixError):
    pass


class NotCentered(NilmixError, ValueError):
    pass


class ConfigError(ValidationError):
    """Malformed or inconsistent configuration file."""
