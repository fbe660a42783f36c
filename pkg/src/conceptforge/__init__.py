"""Parametric geometric concept assets and executable manipulation blueprints."""

__version__ = "0.1.0"
