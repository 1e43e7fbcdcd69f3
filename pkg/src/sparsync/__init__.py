"""Finite-blocklength simulation and analysis of bursty communication with
sparse receiver sampling: constrained capacity and dispersion solvers, the
multiphase detect-then-confirm decoders, an error-event Monte Carlo engine,
and second-order rate-expansion predictions."""

__version__ = "0.1.0"
