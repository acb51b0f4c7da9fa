"""Front-view camera data to top-view semantic occupancy grids."""

__version__ = "0.1.0"
