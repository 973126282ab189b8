"""Entry point for python -m infdpp."""

from infdpp.cli import main

if __name__ == "__main__":
    main()
