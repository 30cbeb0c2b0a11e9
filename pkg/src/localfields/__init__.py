"""Exact ultrametric computation: truncated local-field arithmetic,
difference-quotient calculus, Mahler-basis diffeomorphism algebra,
profinite permutation towers, one-parameter subgroup checks and
finite-level loop monoids."""

__version__ = "0.1.0"
