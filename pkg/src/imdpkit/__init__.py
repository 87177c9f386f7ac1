"""Interval MDP abstraction, verification and synthesis for stochastic systems."""

__version__ = "0.1.0"
