"""Simulation toolkit for the two-membrane cavity: superradiant transition,
discrete-time-crystal protocols, small-N quantum dynamics and the
cavity-spectrum feasibility analysis."""

__version__ = "0.1.0"
