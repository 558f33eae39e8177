"""Monte Carlo and exact-identity toolkit for the reduced t-field H^{2|2} sigma model."""

__version__ = "0.1.0"
