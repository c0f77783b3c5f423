"""Model server speaking the nuclei-detection backend wire protocol."""

from .config import ShimConfig
from .service import create_app

__version__ = "0.1.0"

__all__ = ["ShimConfig", "create_app", "__version__"]
