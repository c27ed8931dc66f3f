#!/usr/bin/env python3
"""Convenience launcher for the dlg-extract command line."""

import sys

from dlgextract.cli import main

if __name__ == "__main__":
    sys.exit(main())
