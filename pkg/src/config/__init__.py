"""
Bootstrap Diagnostics Configuration
"""

from src.config.settings import RunConfig, Settings, parse_config

__all__ = ["RunConfig", "Settings", "parse_config"]
