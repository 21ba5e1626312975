"""Diffusion-view detection over multi-hop amplify-and-forward relay chains."""

from ._backend import get_backend, set_backend, use_backend
from .signal import ConfigurationError, build_constellation

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "build_constellation", "get_backend", "set_backend", "use_backend"]
