"""Variational Monte Carlo with quantum-circuit initial distributions, simulated classically."""

__version__ = "0.1.0"
