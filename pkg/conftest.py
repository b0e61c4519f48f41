"""Shared pytest fixtures: every test writes its run log into tmp_path."""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from core.runlog import RunLog, set_runlog


@pytest.fixture(autouse=True)
def isolated_runlog(tmp_path):
    runlog = RunLog(tmp_path / "pdqls.log")
    set_runlog(runlog)
    yield runlog
    set_runlog(None)
