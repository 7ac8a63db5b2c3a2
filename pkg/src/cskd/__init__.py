"""Key distribution by variance-based watermarking of compressive measurements."""

import logging

from ._accel import backend_name

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
__all__ = ["backend_name", "__version__"]
