"""Numerical simulator of micro-macro entanglement from quantum-injected parametric amplification."""

__version__ = "0.1.0"
