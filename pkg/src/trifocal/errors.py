"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives structurally invalid input."""


class DegenerateGeometryError(RuntimeError):
    """Raised for geometric degeneracies (point at infinity, ray-aligned
    tangent, parallel triangulation rays, coincident line points)."""


class SceneSamplingError(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""


class SolverFailureError(RuntimeError):
    """Raised when every tracked path of a solve fails."""


class CertificationIncompleteError(RuntimeError):
    """Raised when monodromy stagnates below the target solution count."""
