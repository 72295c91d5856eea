import logging

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "fedgan_ids"


def stderr_console() -> Console:
    return Console(stderr=True)


def configure_logging(*, quiet: bool = False, verbose: bool = False) -> None:
    """Send the package's log records to stderr through rich.

    `quiet` keeps warnings and errors only; `verbose` enables debug output.
    """
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    handler = RichHandler(
        console=stderr_console(), show_path=False, rich_tracebacks=True
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
