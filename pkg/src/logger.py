import logging
import os
from logging.handlers import RotatingFileHandler

ROOT_LOGGER = "ecbench"
LOG_FILE_NAME = "ecbench.log"

FORMATTER = logging.Formatter(
    '%(asctime)s [%(levelname)s] %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)


def _log_dir():
    return os.getenv("ECBENCH_LOG_DIR", "logs")


def _log_level(level=None):
    level = (level or os.getenv("ECBENCH_LOG_LEVEL", "INFO")).upper()
    return getattr(logging, level, logging.INFO)


def _file_handler(log_dir):
    try:
        os.makedirs(log_dir, exist_ok=True)
        # Max size 10MB, keep 5 backups
        handler = RotatingFileHandler(
            os.path.join(log_dir, LOG_FILE_NAME),
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
            encoding='utf-8',
        )
    except OSError:
        # read-only checkout: console only
        return None
    handler.setFormatter(FORMATTER)
    return handler


def _configure_root():
    root = logging.getLogger(ROOT_LOGGER)
    if root.handlers:
        return root

    root.setLevel(_log_level())
    root.propagate = False

    file_handler = _file_handler(_log_dir())
    if file_handler:
        root.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(FORMATTER)
    root.addHandler(console_handler)
    return root


def get_logger(name=None):
    """
    Returns a logger instance that writes to both file and console.

    Module loggers are children of the ``ecbench`` logger and share its
    handlers.
    """
    root = _configure_root()
    if not name or name == ROOT_LOGGER:
        return root
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def configure(level=None, log_dir=None):
    """
    Re-point the package logger at the settings of a loaded config.

    ``log_dir`` replaces the rotating file handler when it differs from the
    directory in use.
    """
    root = _configure_root()
    root.setLevel(_log_level(level))
    if not log_dir:
        return root

    target = os.path.abspath(os.path.join(log_dir, LOG_FILE_NAME))
    for handler in list(root.handlers):
        if isinstance(handler, RotatingFileHandler):
            if handler.baseFilename == target:
                return root
            root.removeHandler(handler)
            handler.close()

    file_handler = _file_handler(log_dir)
    if file_handler:
        root.addHandler(file_handler)
    return root
