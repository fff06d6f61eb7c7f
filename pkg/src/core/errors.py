"""
Error types for candi-lab.

Every error carries a short machine-readable ``code`` so the CLI can report it
as JSON on the error stream.
"""


class CandiLabError(Exception):
    """Base class for all library errors"""

    code = "candi_lab_error"

    def to_dict(self) -> dict:
        return {"success": False, "error": self.code, "message": str(self)}


class DomainError(CandiLabError, ValueError):
    """Argument outside the domain of an operation"""

    code = "domain_error"


class QuadratureError(CandiLabError):
    """Numerical integration did not reach the requested tolerance"""

    code = "quadrature_error"


class DegenerateError(CandiLabError):
    """Zero denominator: identical embeddings, all-zero rows, empty ranges"""

    code = "degenerate_error"


class ShapeError(CandiLabError, ValueError):
    code = "shape_error"


class ImpossibleEvidenceError(CandiLabError):
    """Clean positions contradict every sequence in the support"""

    code = "impossible_evidence"


class DivergenceError(CandiLabError):
    code = "divergence"


class ConfigError(CandiLabError):
    """Run config, distribution or checkpoint document failed to parse or validate"""

    code = "config_error"
