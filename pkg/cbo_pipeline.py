#!/usr/bin/env python3
"""
Consensus-Based Optimization Pipeline
Main entry point for runs, ensembles and verification
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.cli import main
from src.settings import get_quiet


def print_banner():
    """Print a banner for the CBO pipeline."""
    print("\n" + "🎯 " * 30)
    print("CONSENSUS-BASED OPTIMIZATION PIPELINE")
    print("Particle consensus with seeded, verifiable dynamics")
    print("🎯 " * 30 + "\n")


if __name__ == "__main__":
    quiet = get_quiet() or any(flag in sys.argv[1:] for flag in ("--quiet", "-q"))
    if not quiet and len(sys.argv) > 1 and sys.argv[1] not in ("list-objectives", "-h", "--help"):
        print_banner()
    sys.exit(main())
