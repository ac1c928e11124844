"""Experiment orchestration: configuration, Monte Carlo runners, summaries and output."""

from .config import ExperimentConfig, from_dict, load
from .experiments import ExperimentResult, RunRecord, run_experiment
from .summary import BoxStats, summarize

__all__ = ["ExperimentConfig", "ExperimentResult", "RunRecord", "BoxStats", "from_dict", "load",
           "run_experiment", "summarize"]
