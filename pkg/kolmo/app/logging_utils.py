"""Logging del laboratorio: consola, fichero global y un registro por ejecución."""

from __future__ import annotations

import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from loguru import logger

RUN_LOG_FILENAME = "run.log"
_FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level:<8} | {process} | {name}:{function}:{line} | {message}"


def configure_logging(logs_dir: Path, *, console_level: str = "INFO") -> None:
    """Consola con formato corto y `kolmo_lab.log` rotado a nivel DEBUG.

    `enqueue=True` serializa los mensajes de los procesos de un barrido.
    """

    logs_dir.mkdir(parents=True, exist_ok=True)
    logger.remove()
    logger.add(
        sys.stderr,
        level=console_level,
        colorize=True,
        format="<green>{time:HH:mm:ss}</green> | <level>{level:<8}</level> | {message}",
    )
    logger.add(
        logs_dir / "kolmo_lab.log",
        level="DEBUG",
        rotation="5 MB",
        retention=5,
        enqueue=True,
        format=_FILE_FORMAT,
    )


@contextmanager
def run_log(directory: Path, *, level: str = "INFO") -> Iterator[Path]:
    """Copia los mensajes de una ejecución en `<directorio>/run.log`."""

    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RUN_LOG_FILENAME
    handler_id = logger.add(path, level=level, mode="w", enqueue=True, format=_FILE_FORMAT)
    try:
        yield path
    finally:
        logger.remove(handler_id)
