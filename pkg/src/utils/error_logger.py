import json
import logging
import os
import sys
import traceback
from datetime import datetime
from typing import Any, Dict, Optional

import colorlog

from ..version import get_version_info

PROJECT_LOG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "logs")
LOG_NAME = "nighthaze.log"
QUIET_LOGGERS = ("PIL", "matplotlib")


class ErrorLogger:
    """
    Package-wide logging setup and error reports.

    Used through its class methods; there is no instance. Every failure that
    reaches a stage boundary is passed to `log_error`, which logs it and dumps
    a JSON report (`error_<id>.json`) next to the log file so a failed run can
    be diagnosed from the id alone.

    Attributes:
        LOG_DIR (str): Directory holding the log file and the reports (default: 'logs' in project root)
        LOG_FILE (str): Path of the DEBUG-level log file
    """

    LOG_DIR = PROJECT_LOG_DIR
    LOG_FILE = os.path.join(PROJECT_LOG_DIR, LOG_NAME)

    CONSOLE_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s%(reset)s - %(message)s"
    FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    _configured = False

    @classmethod
    def setup_logging(cls, log_dir: Optional[str] = None, level: str = "INFO") -> None:
        """
        Attach a colored stderr handler at `level` and a file handler at DEBUG to the root logger.

        Safe to call more than once: handlers from an earlier call are replaced,
        so the command line can move the log once its settings are known.
        Uncaught exceptions are logged at CRITICAL before the default hook runs.

        Args:
            log_dir: Directory for nighthaze.log and error reports
            level: Console level name ('DEBUG', 'INFO', ...)
        """
        if log_dir is not None:
            cls.LOG_DIR = log_dir
            cls.LOG_FILE = os.path.join(log_dir, LOG_NAME)

        root = logging.getLogger()
        try:
            os.makedirs(cls.LOG_DIR, exist_ok=True)
            file_handler = logging.FileHandler(cls.LOG_FILE, encoding="utf-8")
        except OSError as e:
            print(f"logging to {cls.LOG_FILE} is unavailable: {e}", file=sys.stderr)
            file_handler = None

        if cls._configured:
            cls._remove_handlers(root)

        console = colorlog.StreamHandler(sys.stderr)
        console.setFormatter(colorlog.ColoredFormatter(cls.CONSOLE_FORMAT))
        console.setLevel(getattr(logging, level.upper(), logging.INFO))
        handlers = [console]
        if file_handler is not None:
            file_handler.setFormatter(logging.Formatter(cls.FILE_FORMAT))
            file_handler.setLevel(logging.DEBUG)
            handlers.append(file_handler)
        for handler in handlers:
            handler._nighthaze = True
            root.addHandler(handler)
        root.setLevel(logging.DEBUG)
        for name in QUIET_LOGGERS:
            logging.getLogger(name).setLevel(logging.WARNING)

        sys.excepthook = cls._log_uncaught
        cls._configured = True

    @staticmethod
    def _remove_handlers(root: logging.Logger) -> None:
        for handler in [h for h in root.handlers if getattr(h, "_nighthaze", False)]:
            root.removeHandler(handler)
            handler.close()

    @staticmethod
    def _log_uncaught(exc_type, exc_value, exc_traceback) -> None:
        if not issubclass(exc_type, KeyboardInterrupt):
            logging.getLogger(__name__).critical("Uncaught exception", exc_info=(exc_type, exc_value, exc_traceback))
        sys.__excepthook__(exc_type, exc_value, exc_traceback)

    @classmethod
    def log_error(
        cls,
        error: Exception,
        context: Optional[Dict[str, Any]] = None,
        level: str = "error",
    ) -> str:
        """
        Log `error` with its context and write the JSON report.

        Never raises; callers re-raise the original error themselves.

        Args:
            error: The exception being reported
            context: What was being done, e.g. {'action': 'save_checkpoint', 'path': ...}
            level: Log level name for the message

        Returns:
            str: The report id, or "unknown" when even logging failed

        Example:
            try:
                manifest = DatasetManifest.load(path)
            except Exception as e:
                ErrorLogger.log_error(e, {'action': 'load_manifest', 'path': path})
                raise
        """
        logger = logging.getLogger(__name__)
        context = context or {}
        try:
            now = datetime.now()
            error_id = now.strftime("%Y%m%d%H%M%S%f")
            summary = f"{type(error).__name__}: {error}"
            if context:
                summary += f" | context: {json.dumps(context, default=str)}"
            logger.log(getattr(logging, level.upper(), logging.ERROR), f"[{error_id}] {summary}")

            report = {
                "error_id": error_id,
                "timestamp": now.isoformat(),
                "error_type": type(error).__name__,
                "error_message": str(error),
                "traceback": "".join(traceback.format_exception(type(error), error, error.__traceback__)),
                "context": context,
                "versions": get_version_info(),
            }
            report_path = os.path.join(cls.LOG_DIR, f"error_{error_id}.json")
            try:
                os.makedirs(cls.LOG_DIR, exist_ok=True)
                with open(report_path, "w", encoding="utf-8") as f:
                    json.dump(report, f, indent=2, ensure_ascii=False, default=str)
            except OSError as e:
                logger.error(f"could not write error report {report_path}: {e}")
            return error_id
        except Exception as e:
            logger.critical(f"error reporting failed: {e}")
            return "unknown"
