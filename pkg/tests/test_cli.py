import json
import subprocess
import sys

import pytest

from trajwarehouse import cli, etl
from trajwarehouse.fixtures import RECIFE_REGION_WKT, tourism_dataset, write_dataset
from trajwarehouse.warehouse import Warehouse, parse_schema_descriptor, table_file_names


@pytest.fixture(scope="module")
def tourism_config(tmp_path_factory):
    return write_dataset(tourism_dataset(), tmp_path_factory.mktemp("cli") / "in")


@pytest.fixture(scope="module")
def built(tourism_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_wh") / "wh"
    assert cli.main(["run-etl", "--config", str(tourism_config), "--out", str(out)]) == 0
    return out


def test_ingest_prints_counts(tourism_config, capsys):
    assert cli.main(["ingest", "--config", str(tourism_config)]) == 0
    counts = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert int(counts["trajectories"]) == 9 and int(counts["pois"]) == 7


def test_parse_error_names_file_and_line(tmp_path, capsys):
    config = write_dataset(tourism_dataset(), tmp_path)
    points = tmp_path / "points.csv"
    lines = points.read_text().splitlines()
    lines[4] = lines[4].rsplit(",", 2)[0] + ",95.0," + lines[4].rsplit(",", 1)[1]
    points.write_text("\n".join(lines) + "\n")
    assert cli.main(["ingest", "--config", str(config)]) == 1
    assert f"{points}:5:" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert cli.main(["run-etl", "--config", str(tmp_path / "x.ini"),
                     "--out", str(tmp_path / "wh")]) == 1
    assert "not found" in capsys.readouterr().err


def test_run_etl_writes_six_tables(built):
    names = {p.name for p in built.iterdir()}
    assert set(table_file_names()) <= names
    assert len(table_file_names()) == 6
    assert etl.REPORT_FILE in names


def test_rerun_inserts_nothing(tourism_config, built, capsys):
    before = {n: (built / n).read_bytes() for n in table_file_names()}
    assert cli.main(["run-etl", "--config", str(tourism_config), "--out", str(built)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["facts_inserted"] == 0 and report["facts_skipped_duplicate"] == 73
    assert {n: (built / n).read_bytes() for n in table_file_names()} == before


def test_crash_before_rename_keeps_old_tables(tourism_config, built, tmp_path, monkeypatch):
    copy = tmp_path / "wh"
    Warehouse.load(built).save(copy)
    before = {p.name: p.read_bytes() for p in copy.iterdir()}
    fresh = write_dataset(tourism_dataset(seed=5), tmp_path / "other")

    def crash(src, dst):
        raise KeyboardInterrupt
    monkeypatch.setattr(etl.os, "replace", crash)
    with pytest.raises(KeyboardInterrupt):
        cli.main(["run-etl", "--config", str(fresh), "--out", str(copy)])
    assert {p.name: p.read_bytes() for p in copy.iterdir()} == before
    assert sorted(p.name for p in tmp_path.iterdir()) == ["other", "wh"]


def test_canned_q4(built, capsys):
    code = cli.main(["query", "--warehouse", str(built), "--canned", "Q4", "--speed-kmh", "30",
                     "--from", "2010", "--to", "2015"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out[0] == ("TrajSegmentSemanticStartPoint,TrajSegmentSemanticEndPoint,"
                      "AverageTrajectorySpeed,TrajectoryModelName,EventItemName,"
                      "EventActivityName")
    assert len(out) > 1


def test_canned_q1_text(built, capsys):
    code = cli.main(["query", "--warehouse", str(built), "--canned", "Q1", "--season", "Summer",
                     "--polygon-wkt", RECIFE_REGION_WKT, "--format", "text"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.splitlines()[0].split() == ["EventItemName", "EventGoalName"]
    assert out.rstrip().endswith("rows)")


def test_unknown_attribute_exits_2(built, tmp_path, capsys):
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({"group_by": ["Weather"], "aggregates": [{"fn": "COUNT"}]}))
    assert cli.main(["query", "--warehouse", str(built), "--spec", str(spec)]) == 2
    assert "UnknownAttribute" in capsys.readouterr().err


def test_missing_canned_parameter_exits_2(built, capsys):
    assert cli.main(["query", "--warehouse", str(built), "--canned", "Q4"]) == 2


def test_spec_file(built, tmp_path, capsys):
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({"group_by": ["CalendarSeason"],
                                "aggregates": [{"fn": "COUNT", "target": "*"}],
                                "order_by": ["CalendarSeason"]}))
    assert cli.main(["query", "--warehouse", str(built), "--spec", str(spec)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "CalendarSeason,COUNT(*)"
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == 73


def test_empty_warehouse_gives_header_only(tmp_path, capsys):
    Warehouse().save(tmp_path)
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps({"aggregates": [{"fn": "COUNT"}]}))
    assert cli.main(["query", "--warehouse", str(tmp_path), "--spec", str(spec)]) == 0
    assert capsys.readouterr().out == "COUNT(*)\n"


def test_query_on_missing_warehouse(tmp_path, capsys):
    assert cli.main(["query", "--warehouse", str(tmp_path), "--canned", "Q2",
                     "--season", "Summer", "--polygon-wkt", RECIFE_REGION_WKT]) == 1


def test_corrupt_warehouse_exits_1(built, tmp_path, capsys):
    copy = tmp_path / "wh"
    wh = Warehouse.load(built)
    wh.facts[0].eventsRepId = 999
    wh.save(copy)
    assert cli.main(["export-schema", "--warehouse", str(copy)]) == 1
    assert "integrity" in capsys.readouterr().err


def test_internal_fault_exits_3(built, monkeypatch, capsys):
    def broken(*a, **k):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "canned_query", broken)
    assert cli.main(["query", "--warehouse", str(built), "--canned", "Q2"]) == 3
    assert "internal fault" in capsys.readouterr().err


def test_export_schema(built, capsys):
    assert cli.main(["export-schema", "--warehouse", str(built)]) == 0
    desc = parse_schema_descriptor(capsys.readouterr().out)
    assert len(desc["dimensions"]) == 5
    assert len(desc["fact"]["measures"]) == 9


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trajwarehouse", "export-schema"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["fact"]["table"] == "fact_traj_tbl"
