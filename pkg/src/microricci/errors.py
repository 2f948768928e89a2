"""Exception types shared across the package."""


class MicroRicciError(Exception):
    """Base class for all package errors."""


class ParseError(MicroRicciError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopologyError(MicroRicciError):
    """Mesh violates the closed-orientable-manifold requirements."""


class DegenerateTriangleError(MicroRicciError):
    """A face's edge lengths violate the strict triangle inequality."""

    def __init__(self, face, lengths):
        self.face = int(face)
        self.lengths = tuple(float(v) for v in lengths)
        super().__init__(
            f"face {self.face} degenerate: lengths "
            f"({self.lengths[0]:.6g}, {self.lengths[1]:.6g}, {self.lengths[2]:.6g}) "
            "violate the triangle inequality"
        )


class DegenerateMetricError(MicroRicciError):
    """Metric became degenerate along an energy integration path."""

    def __init__(self, t, cause):
        self.t = float(t)
        self.cause = cause
        super().__init__(f"degenerate metric at path parameter t={self.t:.6g}: {cause}")


class DecimationError(MicroRicciError):
    """Edge-collapse decimation could not reach the requested vertex count."""


class ModelFormatError(MicroRicciError):
    """Model file is corrupt, truncated, or has an unsupported version."""
