import json
import logging
import os
import sys

import pytest

from src.utils.error_logger import ErrorLogger
from src.utils.exceptions import DataError, NightHazeError, ParameterError
from src.version import CHECKPOINT_FORMAT_VERSION, __version__

logger = logging.getLogger(__name__)


def test_log_error_writes_json_report(isolated_error_reports):
    try:
        raise DataError("manifest is empty")
    except DataError as e:
        error_id = ErrorLogger.log_error(e, {'action': 'load_manifest', 'path': "x.txt"})

    with open(os.path.join(isolated_error_reports, f"error_{error_id}.json"), encoding="utf-8") as f:
        report = json.load(f)
    assert report["error_type"] == "DataError"
    assert report["error_message"] == "manifest is empty"
    assert report["context"] == {'action': 'load_manifest', 'path': "x.txt"}
    assert "raise DataError" in report["traceback"]
    assert report["versions"]["version"] == __version__
    assert report["versions"]["checkpoint_format"] == CHECKPOINT_FORMAT_VERSION


def test_setup_logging_creates_log_file(tmp_path):
    hook = sys.excepthook
    log_dir = str(tmp_path / "run_logs")
    try:
        ErrorLogger.setup_logging(log_dir, "WARNING")
        logging.getLogger("nighthaze.test").debug("file only")
        assert ErrorLogger.LOG_FILE == os.path.join(log_dir, "nighthaze.log")
        assert os.path.isfile(ErrorLogger.LOG_FILE)
        ours = [h for h in logging.getLogger().handlers if getattr(h, "_nighthaze", False)]
        assert len(ours) == 2
        for handler in ours:
            handler.flush()
        with open(ErrorLogger.LOG_FILE, encoding="utf-8") as f:
            assert "file only" in f.read()
    finally:
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, "_nighthaze", False):
                root.removeHandler(handler)
                handler.close()
        sys.excepthook = hook


def test_exception_hierarchy():
    assert issubclass(DataError, NightHazeError)
    with pytest.raises(NightHazeError):
        raise ParameterError("bad")
