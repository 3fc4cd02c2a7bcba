"""HTTP service exposing single-frame localization and tracking sessions."""

from .app import create_app

__all__ = ["create_app"]
