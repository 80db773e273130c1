from .app import build_detector, create_app, serve
from .screening import Screener, ScreeningResult

__all__ = ["Screener", "ScreeningResult", "build_detector", "create_app", "serve"]
