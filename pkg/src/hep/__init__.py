"""Headway exclusion process: exact measures, generators, simulation and duality."""
from __future__ import annotations

__version__ = "0.1.0"
