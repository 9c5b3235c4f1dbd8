"""Generic-scalar finite element assembly with embedded analysis.

One generically-typed residual implementation is reused, through
type-specialized gather (seed) and scatter (extract) stages, to produce
residuals, Jacobians, parameter and shape sensitivities, and intrusive
spectral (stochastic Galerkin) expansions, driving Newton solves,
continuation, gradient-based shape optimization, and UQ.
"""

__version__ = "0.1.0"
