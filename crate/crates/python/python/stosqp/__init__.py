"""Stochastic SQP solver bindings."""

from ._stosqp import (
    Problem,
    builtin_names,
    least_squares_multiplier,
    parse_libsvm,
    phi_root,
    select_best,
    solve,
    solve_kkt,
)

__all__ = [
    "Problem",
    "builtin_names",
    "least_squares_multiplier",
    "parse_libsvm",
    "phi_root",
    "select_best",
    "solve",
    "solve_kkt",
]
