"""
Decorators for command handlers: exit-code mapping and timing.
"""

import logging
import time
from functools import wraps

from pydantic import ValidationError

from core.errors import DataError, NumericError, UsageError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def exit_codes(f):
    """
    Translate library exceptions raised by a command handler into exit codes.

    usage (including config validation failures) -> 1, data (including missing
    files and bad checkpoints) -> 2, numeric failures -> 3. A handler returning None exits 0.
    """

    @wraps(f)
    def decorated(*args, **kwargs):
        try:
            result = f(*args, **kwargs)
        except (UsageError, ValidationError) as e:
            logger.error(f"[ERROR] Usage: {e}")
            return EXIT_USAGE
        except (DataError, FileNotFoundError) as e:
            logger.error(f"[ERROR] Data: {e}")
            return EXIT_DATA
        except NumericError as e:
            logger.error(f"[ERROR] Numeric: {e}")
            return EXIT_NUMERIC
        return EXIT_OK if result is None else result

    return decorated


def timed(label: str):
    """Log the wall-clock duration of the wrapped call at INFO."""

    def decorator(f):
        @wraps(f)
        def decorated(*args, **kwargs):
            start = time.perf_counter()
            try:
                return f(*args, **kwargs)
            finally:
                logger.info(f"[{label}] finished in {time.perf_counter() - start:.2f}s")

        return decorated

    return decorator
