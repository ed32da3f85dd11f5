"""Coarse-to-fine classification cascade for candidate-based detection data.

The pipeline chains a coarse parametric stage (multiple-instance logistic
regression used to prune easy negatives) with a fine nonparametric stage
(feature selection, class-regularized graph embedding, divergence-based
template clustering and soft kNN voting), evaluated with FROC analysis.
"""

__version__ = "0.1.0"

from ctfcad.errors import ConfigError, DataError, NumericalError

__all__ = ["ConfigError", "DataError", "NumericalError", "__version__"]
