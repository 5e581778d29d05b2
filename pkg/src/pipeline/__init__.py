"""
Pipeline module for consensus-based optimization experiments
"""

from .experiment_builder import ExperimentBuilder, RunSummary, execute_seed

__all__ = [
    'ExperimentBuilder',
    'RunSummary',
    'execute_seed'
]
