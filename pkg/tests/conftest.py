import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trajwarehouse import etl, fixtures  # noqa: E402
from trajwarehouse.geo import GeoPoint  # noqa: E402
from trajwarehouse.trajectory import TimedPoint, validate_raw_trajectory  # noqa: E402
from trajwarehouse.warehouse import Warehouse  # noqa: E402

T0 = datetime(2015, 7, 15, 10, 0, 0, tzinfo=timezone.utc)


def make_traj(latlons, times, traj_id="t1", object_id="o1", t0=T0):
    pts = [TimedPoint(GeoPoint(lat, lon), t0 + timedelta(seconds=s))
           for (lat, lon), s in zip(latlons, times)]
    return validate_raw_trajectory(traj_id, object_id, pts)


@pytest.fixture(scope="session")
def domain_builds(tmp_path_factory):
    """name -> (config path, warehouse dir, LoadReport) for each domain fixture."""
    builds = {}
    for name, make in fixtures.DATASETS.items():
        root = tmp_path_factory.mktemp(name)
        config = fixtures.write_dataset(make(), root / "inputs")
        report = etl.run_pipeline(etl.load_config(config), root / "warehouse")
        builds[name] = (config, root / "warehouse", report)
    return builds


@pytest.fixture(scope="session")
def domain_warehouses(domain_builds):
    return {name: Warehouse.load(wh_dir) for name, (_, wh_dir, _) in domain_builds.items()}


# one PASS/FAIL line per acceptance criterion in the terminal summary
_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))
    elif report.when == "setup" and report.failed and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], "error"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
