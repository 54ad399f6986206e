"""Sensor-data imputation with a multi-task GP and low-rank state estimation for radial feeders."""

__version__ = "0.1.0"
