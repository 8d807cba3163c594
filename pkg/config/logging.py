import logging
import sys
from pathlib import Path
from pythonjsonlogger import jsonlogger
from config.settings import (
    LOG_LEVEL,
    LOG_FORMAT,
    LOG_DATE_FORMAT,
    ENABLE_JSON_LOGGING,
    JSON_LOG_FILE,
    LOG_ROTATION_ENABLED,
    LOG_MAX_BYTES,
    LOG_BACKUP_COUNT
)
from logging.handlers import RotatingFileHandler

_HANDLER_TAG = "_openhybrid_handler"


def setup_logging(json_log_file: str = JSON_LOG_FILE, level: str = LOG_LEVEL):
    """Настройка системы логирования с поддержкой текстового и JSON форматов"""
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Повторный вызов не должен дублировать обработчики
    if any(getattr(h, _HANDLER_TAG, False) for h in root_logger.handlers):
        return root_logger

    # Создаем форматтеры
    text_formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)
    json_formatter = jsonlogger.JsonFormatter(
        '%(asctime)s %(name)s %(levelname)s %(message)s',
        datefmt=LOG_DATE_FORMAT
    )

    # Консоль - текстовый формат
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(text_formatter)
    setattr(console_handler, _HANDLER_TAG, True)
    root_logger.addHandler(console_handler)

    if ENABLE_JSON_LOGGING and json_log_file:
        Path(json_log_file).parent.mkdir(parents=True, exist_ok=True)
        if LOG_ROTATION_ENABLED:
            json_handler = RotatingFileHandler(
                json_log_file,
                maxBytes=LOG_MAX_BYTES,
                backupCount=LOG_BACKUP_COUNT,
                encoding='utf-8'
            )
        else:
            json_handler = logging.FileHandler(json_log_file, encoding='utf-8')

        json_handler.setFormatter(json_formatter)
        setattr(json_handler, _HANDLER_TAG, True)
        root_logger.addHandler(json_handler)

    # Отключаем лишние логи от библиотек
    logging.getLogger("asyncio").setLevel(logging.WARNING)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    """Получить логгер с указанным именем"""
    return logging.getLogger(name)
