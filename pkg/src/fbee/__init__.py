"""Numerical laboratory for forward-backward evolution equations."""

from __future__ import annotations

__version__ = "0.1.0"
