"""Render the convergence-study figures from the campaign CSVs.

The plots consume only the CSV files (errors.csv, mse.csv, fit.csv), never
the simulation package, so they can run against any output directory.
"""

__version__ = "0.1.0"
