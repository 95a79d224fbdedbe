import logging
import os

TRACE = 5
logging.addLevelName(TRACE, "TRACE")

_LEVELS = {"off": None, "info": logging.INFO, "trace": TRACE}


def get_logger(name: str = "pipeweave") -> logging.Logger:
    logger = logging.getLogger(name)
    root = logging.getLogger("pipeweave")
    if not getattr(root, "_pipeweave_configured", False):
        root._pipeweave_configured = True
        level = _LEVELS.get(os.environ.get("PIPEWEAVE_LOG", "off").strip().lower())
        if level is None:
            root.addHandler(logging.NullHandler())
            root.setLevel(logging.CRITICAL + 1)
        else:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter("[%(threadName)s] %(name)s: %(message)s"))
            root.addHandler(handler)
            root.setLevel(level)
    return logger
