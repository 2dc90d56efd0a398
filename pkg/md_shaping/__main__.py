#!/usr/bin/env python3
"""
Entry point for running md_shaping as a module.
"""

import sys

from md_shaping import main

if __name__ == "__main__":
    sys.exit(main())
