"""Randomization-based inference for panel experiments with interference."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    design,
    errors,
    estimators,
    exposure,
    inference,
    io,
    outcomes,
    population,
    variance,
)
