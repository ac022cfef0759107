"""Cross-modal data discovery over lakes of CSV tables and text documents."""

__version__ = "0.1.0"

from .config import EngineConfig

__all__ = ["EngineConfig", "__version__"]
