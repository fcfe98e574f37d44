from __future__ import annotations


class DomeLimitError(Exception):
    """Root of every error raised by the package."""


class ConfigurationError(DomeLimitError, ValueError):
    pass


class GeometryDomainError(DomeLimitError, ValueError):
    pass


class AssemblyError(DomeLimitError):
    pass


class MechanismError(DomeLimitError):
    pass


class CertificateError(DomeLimitError):
    def __init__(self, quantity: str, value: float, tolerance: float) -> None:
        super().__init__(f"certificate check '{quantity}' failed: {value:.3e} > {tolerance:.1e}")
        self.quantity = quantity
        self.value = value
        self.tolerance = tolerance
