"""Numerical laboratory for the Yang-Mills heat equation on 3-d boxes and tori."""

__version__ = "0.1.0"
