"""Free-knot B-spline fitting with stacked knot-difference networks."""

__version__ = "0.1.0"
