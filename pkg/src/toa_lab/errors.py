"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """Lattice or schedule parameters violate a structural precondition."""


class PerturbationDomainError(ValueError):
    """Requested closed-form prediction outside the domain where it is derived
    (detector away from the boundary site, odd-size ring, degenerate modes)."""


class OracleSizeError(ValueError):
    """Dense reference evolution refused: system too large for the O(N^2)-per-step path."""


class SeriesDataError(ValueError):
    """Survival-series input unusable for the requested analysis
    (non-monotone data, too few points, insufficient tail)."""
