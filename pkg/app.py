#!/usr/bin/env python3
"""
candi-lab
Hybrid continuous-discrete diffusion for categorical sequences

This is the main entry point for the candi-lab command-line tool.
It dispatches to the CLI in the organized src structure.
"""

import os
import sys

# Add the project root to the Python path so the src package resolves
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.cli import run

if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
