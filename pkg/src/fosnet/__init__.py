"""Neural-network function-on-scalar regression."""

__version__ = "0.1.0"
