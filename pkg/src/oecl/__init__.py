"""Outlier-exposed contrastive learning: autodiff core, losses, scores, theory checks and a training harness."""

from .errors import ConfigError, ContractError, DimensionError, DomainError, NumericalError, OECLError, ParseError

__all__ = ["ConfigError", "ContractError", "DimensionError", "DomainError", "NumericalError", "OECLError", "ParseError"]
__version__ = "0.1.0"
