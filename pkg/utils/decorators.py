"""
Decorator utilities for spikegd.
"""
import functools
import logging
import time
from typing import Callable, Any

logger = logging.getLogger(__name__)


def log_duration(func: Callable) -> Callable:
    """
    Decorator to log how long a command handler ran.

    Args:
        func: The handler function to decorate

    Returns:
        Wrapped function that logs its wall-clock duration
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start = time.perf_counter()
        logger.info(f"{func.__name__} started")
        try:
            return func(*args, **kwargs)
        finally:
            logger.info(f"{func.__name__} finished in {time.perf_counter() - start:.2f} s")

    return wrapper
