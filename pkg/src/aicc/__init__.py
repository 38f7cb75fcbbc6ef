"""Approximated coded computing for nonlinear matrix functions.

Learned polynomial encoders and computation maps let a master recover
K matrix function values from any R = G*P + 1 worker results. A Lagrange
coded computing baseline, a straggler simulator and an experiment CLI
live alongside.
"""

__version__ = "0.1.0"
