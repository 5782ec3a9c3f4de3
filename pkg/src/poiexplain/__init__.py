"""Explanatory analysis of POI recommender performance over subsamples of check-in data."""
from .config import default_config, load_config
from .pipeline import Pipeline, write_report

__all__ = ["Pipeline", "default_config", "load_config", "write_report"]
__version__ = "0.1.0"
