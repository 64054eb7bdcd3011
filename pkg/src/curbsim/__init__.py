"""curbsim: deterministic digital-twin simulator for a 1:14 Ackermann
vehicle and its smart-city infrastructure."""

__version__ = "0.1.0"
