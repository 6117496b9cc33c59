"""Run with ``python -m stvad``."""

from stvad.cli import main

main()
