"""Tensor calculus on tangent bundles: generalized Sasaki metrics and their connections."""

from .expr import ParseError, ScalarExpr, parse
from .jets import Jet, differentiate_field, eval_jet

__all__ = ["Jet", "ParseError", "ScalarExpr", "differentiate_field", "eval_jet", "parse"]
__version__ = "0.1.0"
