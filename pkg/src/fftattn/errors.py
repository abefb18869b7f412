"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Raised when an operand's dimensions violate an operation's contract."""


class DegenerateRowError(ValueError):
    """Raised when an attention row has no unmasked key to attend to."""


class FeatureMapOverflowError(OverflowError):
    """Raised when a feature-map exponent would overflow float64.

    The positive random feature map evaluates exp(w.x - |x|^2/2).  The
    combined exponent is formed first and checked against the float64
    limit; inputs pushing past it get this error instead of silent Inf.
    """
