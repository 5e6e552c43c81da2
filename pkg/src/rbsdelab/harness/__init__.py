"""Scenario files, experiment runner and command line."""

from .runner import COMMANDS, ResultBundle, run
from .scenario import Scenario, load_scenario, save_scenario

__all__ = ["COMMANDS", "ResultBundle", "Scenario", "load_scenario", "run", "save_scenario"]
