"""Next-day wildfire danger forecasting from a harmonized daily datacube."""

__version__ = "0.1.0"
