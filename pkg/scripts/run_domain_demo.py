"""Build a warehouse for each synthetic domain and print the canned query results.

    python3 scripts/run_domain_demo.py [--out DIR] [--domain tourism] [--seed 0]
"""

import argparse
import itertools
import tempfile
from pathlib import Path

from trajwarehouse import etl, fixtures
from trajwarehouse.query import canned_query
from trajwarehouse.warehouse import Warehouse


def landmark_pair(wh: Warehouse, params: dict) -> tuple[str, str]:
    """First pair of landmarks (sorted by name) for which Q3 returns rows."""
    names = sorted({wh.dimensions["geographical"].member(f.geoSpaceId)["LandmarkObjectName"]
                    for f in wh.facts} - {"UNKNOWN"})
    for start, end in itertools.permutations(names, 2):
        if canned_query(wh, "Q3", {**params, "start_poi": start, "end_poi": end}).rows:
            return start, end
    return "", ""


def run(domain: str, root: Path, seed: int) -> None:
    config = fixtures.write_dataset(fixtures.DATASETS[domain](seed=seed), root / domain / "in")
    report = etl.run_pipeline(etl.load_config(config), root / domain / "wh")
    wh = Warehouse.load(root / domain / "wh")
    print(f"== {domain}: {report.facts_inserted} facts, "
          f"{report.unmatched_stops} unmatched stops, {report.orphan_posts} orphan posts")

    params = {"season": "Summer", "polygon": fixtures.RECIFE_REGION_WKT, "speed_kmh": 30,
              "year_from": 2000, "year_to": 2030}
    start, end = landmark_pair(wh, params)
    params.update(start_poi=start, end_poi=end)
    for qid in ("Q1", "Q2", "Q3", "Q4"):
        if qid == "Q3" and not start:
            continue
        print(f"-- {qid}")
        print(canned_query(wh, qid, params).to_text())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="keep outputs here instead of a temp dir")
    ap.add_argument("--domain", choices=sorted(fixtures.DATASETS))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    domains = [args.domain] if args.domain else list(fixtures.DATASETS)
    if args.out:
        for d in domains:
            run(d, args.out, args.seed)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            for d in domains:
                run(d, Path(tmp), args.seed)


if __name__ == "__main__":
    main()
