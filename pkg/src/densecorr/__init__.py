"""Dense correspondence, keypoint transfer and keypoint prediction on feature grids."""

__version__ = "0.1.0"
