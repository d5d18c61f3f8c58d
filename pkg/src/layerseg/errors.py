"""Exception types shared across the package.

Exit-code mapping used by the CLI: SchemaError -> 2, geometry errors
(DegenerateGeometry, InvalidLayer, PreconditionViolated) -> 3,
ResourceExhausted -> 4.
"""


class LayersegError(Exception):
    """Base class for all layerseg errors."""


class SchemaError(LayersegError):
    """Input document is malformed (structure, not geometry)."""


class DegenerateGeometry(LayersegError):
    """Geometry violates a structural invariant (too few points, zero area, ...)."""


class InvalidLayer(LayersegError):
    """Layer-level geometric violation (crossing loops, orphan hole, ...)."""


class PreconditionViolated(LayersegError):
    """An operation was called outside its documented precondition."""


class ResourceExhausted(LayersegError):
    """A bounded retry loop hit its limit (pathological geometry)."""
