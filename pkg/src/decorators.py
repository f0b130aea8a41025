import time
import traceback
from functools import wraps
from typing import Callable

import src.globals as g
from src.logger import Logger

logger = Logger(__name__)

# Registry of CLI command handlers, filled by the command decorator.
command_registry: dict[str, Callable] = {}


def command(name: str) -> Callable:
    """Decorator to register a handler for a CLI command.

    Args:
        name (str): Command name.

    Returns:
        Callable: Decorator function.
    """

    def decorator(func: Callable) -> Callable:
        """Registers the handler under the command name.

        Args:
            func (Callable): Function to decorate.

        Returns:
            Callable: The same function.
        """
        if name in command_registry:
            raise ValueError(f"Command {name} is already registered")
        command_registry[name] = func
        return func

    return decorator


def handle_errors(func: Callable) -> Callable:
    """Decorator to handle exceptions in command handlers.
    Logs error and saves the traceback, then re-raises so the caller
    can turn the error into an exit code.

    Args:
        func (Callable): Function to decorate.

    Returns:
        Callable: Decorated function.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        """Call decorated function and log exceptions."""
        try:
            return func(*args, **kwargs)
        except Exception as e:
            logger.error(f"An error occurred in {func.__module__}.{func.__name__}: {repr(e)}")
            if not g.is_development:
                try:
                    logger.dump_traceback(traceback.format_exc())
                except OSError:
                    pass
            raise

    return wrapper


def log_duration(func: Callable) -> Callable:
    """Decorator to log wall-clock duration of expensive operations at debug level.

    Args:
        func (Callable): Function to decorate.

    Returns:
        Callable: Decorated function.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        """Call decorated function and log its duration."""
        start = time.perf_counter()
        result = func(*args, **kwargs)
        logger.debug(f"{func.__name__} finished in {time.perf_counter() - start:.3f}s")
        return result

    return wrapper
