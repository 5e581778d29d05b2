"""Consensus-Based Optimization Engine and Verification Harness"""

__version__ = "1.0.0"
