"""Experiment runner: config files, the expression grammar and the ``wfs`` command."""
from wfs.cli.runner import main, run_experiment

__all__ = ["main", "run_experiment"]
