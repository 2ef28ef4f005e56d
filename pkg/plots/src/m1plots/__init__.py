"""Figure rendering for solver CSV artifacts; strictly downstream of the CSVs."""

__version__ = "0.1.0"
