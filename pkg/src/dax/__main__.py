"""Entry point for `python -m src.dax`."""

from .cli import main

main()
