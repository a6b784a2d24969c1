"""
Entry point for the landmark retrieval CLI.

Example:
python main.py train --dataset runs/data --output-dir runs/train
"""

import sys

from landmark_retrieval.cli import main

if __name__ == "__main__":
    sys.exit(main())
