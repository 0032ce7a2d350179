"""Lumped and field-level simulation of hydrogenated nickelate device arrays
used as a spatiotemporal reservoir with a crossbar readout."""

__version__ = "0.1.0"
