from .main import Materium
from .core.logger import Logger
from .core.stats import Stats

__all__ = ["Materium", "Logger", "Stats"]
__version__ = "0.1.0"
