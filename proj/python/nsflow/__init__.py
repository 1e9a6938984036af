"""Chaos decompositions, influences and noise-sensitivity checks."""

from ._core import *  # noqa: F401,F403

__all__ = [n for n in dir() if not n.startswith("_")]
