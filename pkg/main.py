"""
hsan-reviews: multiple-instance review classifier with segment attention.

Run with: python main.py <synth|stats|train|eval|highlight> [options]
"""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
