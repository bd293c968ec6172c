"""Quantum flow matching: step-wise circuit evolution of pure-state ensembles
between density matrices, with exact oracles for every reproduced result."""

__version__ = "0.1.0"
