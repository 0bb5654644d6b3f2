"""Singular integral experiments on Carnot groups.

Submodules: groups (group arithmetic in exponential coordinates), kernels
(CZ kernels and dyadic windows), curves (horizontal lifts and quadrature),
cubes (Christ cube hierarchies), sio (truncated operators and testing
conditions), cli (the campaign runner behind the carnot-sio command).
"""
__version__ = "0.1.0"

from . import backend, cubes, curves, groups, kernels, sio  # noqa: F401
