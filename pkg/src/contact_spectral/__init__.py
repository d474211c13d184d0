"""Numerical contact dynamics on R^{2n} x S^1: translated points, Rabinowitz
action spectra, an explicit compactly supported Reeb flow, and ceiling
capacities."""

__version__ = "0.1.0"
