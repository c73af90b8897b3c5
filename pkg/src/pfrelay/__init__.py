"""Outage and capacity analysis of a pinhole/Rayleigh project-and-forward relay,
with a contour-quadrature Meijer G-function evaluator and a Monte-Carlo
simulator."""

__version__ = "0.1.0"
