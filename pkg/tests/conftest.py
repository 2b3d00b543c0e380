import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest


@pytest.fixture(scope="session")
def reference_events():
    from appealgate.fixtures import reference_log

    return reference_log()


@pytest.fixture(scope="session")
def reference_report(reference_events):
    from appealgate.experiment.report import build_report

    return build_report(reference_events)
