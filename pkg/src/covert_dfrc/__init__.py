"""Covert DFRC design with movable antennas."""

__version__ = "0.1.0"
