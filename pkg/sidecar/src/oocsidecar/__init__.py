"""HTTP sidecar for the oocguard pipeline: embeddings + generation."""

from .app import create_app
from .config import SidecarConfig

__all__ = ["create_app", "SidecarConfig"]
