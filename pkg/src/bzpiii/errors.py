"""Exception hierarchy shared by all modules."""


class BZError(Exception):
    """Base class for every error raised by the package."""


class DomainError(BZError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularMatrix(BZError, ArithmeticError):
    pass


class OutOfSpan(BZError, ValueError):
    """Evaluation point outside the span covered by a trajectory or grid."""


class UnsupportedClass(BZError, ValueError):
    pass


class PoleCollision(BZError, ArithmeticError):
    """Spectral parameter came too close to one of the moving poles +-sigma."""


class BoundaryNode(BZError, IndexError):
    pass


class GridTooSmall(BZError, ValueError):
    pass


class InconsistentF(BZError, ArithmeticError):
    """The conformal factor obtained from different routes disagrees."""


class ConfigError(BZError, ValueError):
    pass
