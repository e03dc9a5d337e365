#!/usr/bin/env python3
"""
cascade-bench launcher
Runs the click command group (same as `python -m app.cli`)
"""
import sys
from pathlib import Path

# Make the app package importable when run from a checkout
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from app.cli import cli


if __name__ == "__main__":
    cli()
