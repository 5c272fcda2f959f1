import logging

from app.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """
    Install a single stream handler on the root logger.
    Safe to call more than once; later calls only change the level.
    """
    root = logging.getLogger()
    if not any(getattr(h, "_hypdamp", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._hypdamp = True
        root.addHandler(handler)
    root.setLevel((level or settings.log_level).upper())
