"""Layered session inspection for multi-tenant clouds, with a deterministic simulator."""

from .engine import simulate
from .model import LayerId, Outcome
from .pipeline import run_pipeline
from .scenario import load_scenario, baseline_scenario

__version__ = "0.1.0"

__all__ = ["LayerId", "Outcome", "load_scenario", "baseline_scenario", "run_pipeline", "simulate"]
