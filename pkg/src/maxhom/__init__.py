"""Spectral homogenisation toolkit for periodic Maxwell systems.

The package solves cell problems and Floquet-fibre resolvent problems for
curl-curl systems with periodic coefficients, posed over general 1-periodic
Borel measures (including singular ones supported on plane arrangements),
and measures how fast the homogenised approximation converges as the period
epsilon shrinks.

Layout:

- ``measure``:   periodic measures and their exact Fourier moments
- ``spectral``:  truncated Fourier cubes, symbols, exact convolution algebra
- ``fields``:    quasiperiodic fields, material coefficients, inner products
- ``galerkin``:  dense form assembly, class decomposition, linear solvers
- ``helmholtz``: measure-adapted Helmholtz decomposition and diagnostics
- ``cell``:      cell problems, effective tensors, the symbol vector d
- ``fibre``:     fibre resolvent solves, B/H recovery, residual correctors
- ``floquet``:   supercell transforms and the direct-integral round trip
- ``harness``:   sweep orchestration, rate fits, reports
- ``cli``:       command line entry point
"""

__version__ = "0.1.0"
