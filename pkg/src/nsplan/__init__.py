"""Neuro-symbolic planning toolkit: STRIPS planning, demonstration-driven
domain abstraction, least-squares skills and energy accounting for a
tabletop Towers of Hanoi testbed."""

__version__ = "0.1.0"
