"""Zero-curvature formulation of Bianchi I/II/VI0/VII0 cosmologies and the
associated gamma = delta = 0 Painleve III equation."""

from .errors import (
    BZError,
    BoundaryNode,
    ConfigError,
    DomainError,
    GridTooSmall,
    InconsistentF,
    OutOfSpan,
    PoleCollision,
    SingularMatrix,
    UnsupportedClass,
)

__version__ = "0.1.0"
