"""Numerical laboratory for quasi-plurisubharmonic envelopes and complex Monge-Ampere equations."""

__version__ = "0.1.0"
