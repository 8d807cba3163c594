import asyncio
import time
from functools import wraps
from typing import Any, Callable
import logging
import config.settings


from typing import TypeVar, cast

T = TypeVar('T', bound=Callable[..., Any])


def _report(logger: logging.Logger, name: str, elapsed: float) -> None:
    # Логируем только медленные операции
    if elapsed > config.settings.SLOW_OPERATION_THRESHOLD:
        logger.warning(f"Slow operation: {name} took {elapsed:.3f}s")


def measure_latency(func: T) -> T:
    """
    Декоратор для измерения длительности функций и корутин.
    Логирует только медленные операции и ошибки с временем до сбоя.
    Логгер берется из `self.logger`, если он есть, иначе из модуля функции.
    """
    def _logger_for(args) -> logging.Logger:
        if args and isinstance(getattr(args[0], 'logger', None), logging.Logger):
            return args[0].logger
        return logging.getLogger(func.__module__)

    if asyncio.iscoroutinefunction(func):
        @wraps(func)
        async def async_wrapper(*args, **kwargs) -> Any:
            start_time = time.perf_counter()
            logger = _logger_for(args)
            try:
                result = await func(*args, **kwargs)
            except Exception as e:
                elapsed = time.perf_counter() - start_time
                logger.error(f"Error in {func.__name__} after {elapsed:.3f}s: {str(e)}")
                raise
            _report(logger, func.__name__, time.perf_counter() - start_time)
            return result

        return cast(T, async_wrapper)

    @wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start_time = time.perf_counter()
        logger = _logger_for(args)
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            elapsed = time.perf_counter() - start_time
            logger.error(f"Error in {func.__name__} after {elapsed:.3f}s: {str(e)}")
            raise
        _report(logger, func.__name__, time.perf_counter() - start_time)
        return result

    return cast(T, wrapper)
