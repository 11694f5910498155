"""The form language: parsing, analysis and lowering."""

from .nodes import (Expr, FormFile, Measure, SourceLocation,
                    pretty, pretty_file, format_number)
from .parser import (FormError, FormSyntaxError, parse_forms,
                     INDEX_NAMES, MEASURE_NAMES)
from .analysis import (FormAnalysisError, FormDescriptor, analyze,
                       integrand_polynomial_degree, value_shape)
from .lowering import Terminal, expand_monomials, lower_integrand

__all__ = [
    "Expr", "FormFile", "Measure", "SourceLocation",
    "pretty", "pretty_file", "format_number",
    "FormError", "FormSyntaxError", "parse_forms",
    "INDEX_NAMES", "MEASURE_NAMES",
    "FormAnalysisError", "FormDescriptor", "analyze",
    "integrand_polynomial_degree", "value_shape",
    "Terminal", "expand_monomials", "lower_integrand",
]
