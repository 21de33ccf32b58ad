"""Hadamard two-point structures for formally self-adjoint wave operators.

Layout:
  geometry      single-chart Lorentzian geometry (geodesics, transport, distortion)
  testfn        compactly supported test sections with exact derivatives
  flatdist      homogeneous distribution families on Minkowski space
  hadamard      transport coefficients U_k, W_k on a chart
  parametrix    truncated local series, residual kernels, local fundamental solutions
  bisolution1p1 discrete 1+1 global assembly (Cauchy bisolutions, gluing, positivity)
  cli           command line runner
"""

__version__ = "0.1.0"

__all__ = [
    "geometry",
    "testfn",
    "flatdist",
    "hadamard",
    "parametrix",
    "bisolution1p1",
    "cli",
]
