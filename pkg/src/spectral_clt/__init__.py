"""Central limit theory for linear spectral statistics of stochastic block models.

The package solves the quadratic vector equation of a block-Wigner-type
matrix, contour-integrates the CLT mean and covariance kernels against test
functions, and checks the predictions by Monte Carlo simulation of SBM
adjacency matrices renormalized by true or estimated edge probabilities.
"""

__version__ = "0.1.0"

from .blockmodel import (BlockModelParams, SbmSpec, bernoulli_cumulants, block_params,
                         example_sbm, load_model, sbm_spec, sbm_to_block_params)
from .contour import EXP, TheoryResult, build_contour, monomial, parse_testfn, poly, theory
from .errors import (ContourTooCloseError, NumericalError, QuadratureError,
                     QveConvergenceError, SpectralCltError, ValidationError)
from .qve import lsd_density, solve_qve, spectral_edge
from .simulate import monte_carlo, sample_sbm, summarize, two_sample_compare

__all__ = [
    "EXP",
    "BlockModelParams",
    "ContourTooCloseError",
    "NumericalError",
    "QuadratureError",
    "QveConvergenceError",
    "SbmSpec",
    "SpectralCltError",
    "TheoryResult",
    "ValidationError",
    "bernoulli_cumulants",
    "block_params",
    "build_contour",
    "example_sbm",
    "load_model",
    "lsd_density",
    "monomial",
    "monte_carlo",
    "parse_testfn",
    "poly",
    "sample_sbm",
    "sbm_spec",
    "sbm_to_block_params",
    "solve_qve",
    "spectral_edge",
    "summarize",
    "theory",
    "two_sample_compare",
]
