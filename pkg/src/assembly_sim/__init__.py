"""Assembly projection simulator with pluggable plasticity rules."""

__version__ = "0.1.0"
