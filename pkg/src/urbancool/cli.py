"""Command-line entry point: ``urbancool run|mitigate|inspect|fixture``.

Exit status is 0 on success, 1 when a pipeline stage fails (a diagnostics
report is still written) and 2 for usage or input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import fixtures, geometry, params as P, weather
from .orchestrator import PipelineConfig, make_advisor, run_pipeline

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _bbox(text: str):
    parts = [float(x) for x in text.replace(",", " ").split()]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four numbers: xmin ymin xmax ymax")
    return tuple(parts)


def _query(args) -> str:
    if args.query is not None:
        return args.query
    if args.query_file is not None:
        return Path(args.query_file).read_text(encoding="utf-8").strip()
    if not sys.stdin.isatty():
        return sys.stdin.read().strip()
    return ""


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    q = p.add_mutually_exclusive_group()
    q.add_argument("-q", "--query", help="natural-language request")
    q.add_argument("--query-file", type=Path, help="read the request from a file")
    p.add_argument("-g", "--geometry", type=Path, required=True, help="directory of building STL files")
    p.add_argument("-w", "--weather", type=Path, required=True, help="EPW climate file")
    p.add_argument("-o", "--out", type=Path, help="output directory (default: runs/<UTC timestamp>)")
    p.add_argument("--defaults", type=Path, help="replacement defaults.json")
    p.add_argument("--params", type=Path, help="user parameter overrides (JSON)")
    p.add_argument("--seed", type=int, help="random seed for sky-view sampling")
    p.add_argument("--bbox", type=_bbox, help="domain bounding box 'xmin,ymin,xmax,ymax' in metres")
    p.add_argument("--advisor", choices=("deterministic", "remote", "none"), default="deterministic")
    p.add_argument("--no-fields", action="store_true", help="skip VTK fields and figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbancool", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the analysis pipeline")
    _pipeline_args(run)

    mit = sub.add_parser("mitigate", help="run the pipeline with the mitigation stage forced on")
    _pipeline_args(mit)
    mit.add_argument("--rounds", type=int, default=1, help="number of mitigation rounds (default 1)")
    mit.add_argument("--delta", type=Path, help="explicit parameter delta (JSON) instead of the advisor proposal")

    ins = sub.add_parser("inspect", help="summarise a geometry directory, EPW file or parameter snapshot")
    ins.add_argument("path", type=Path)

    fix = sub.add_parser("fixture", help="write the bundled synthetic inputs")
    fix.add_argument("kind", choices=("canyon", "district", "epw"))
    fix.add_argument("out", type=Path)
    return parser


def _cmd_pipeline(args, mitigate: bool) -> int:
    query = _query(args)
    if not query:
        print("error: a query is required (--query, --query-file or stdin)", file=sys.stderr)
        return EXIT_USAGE
    rounds = getattr(args, "rounds", 1)
    if rounds < 1:
        print("error: --rounds must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    if args.out is None:
        args.out = Path("runs") / datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    config = PipelineConfig(query=query, geometry_dir=args.geometry, climate_path=args.weather, out_dir=args.out,
                            defaults_path=args.defaults, overrides_path=args.params,
                            delta_path=getattr(args, "delta", None), seed=args.seed, rounds=rounds,
                            force_mitigation=mitigate, domain_bbox=args.bbox, write_fields=not args.no_fields)
    state = run_pipeline(config, make_advisor(args.advisor), weather.RealtimeClient.from_env())
    print(f"report: {args.out / 'report.md'}")
    if state.error is not None:
        print(f"failed at stage {state.error.stage}: {state.error.message}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_inspect(path: Path) -> int:
    if path.is_dir():
        bset = geometry.build_index(path, geometry.GeometryConfig(permissive=True))
        out = {"buildings": bset.index_records(), "domain_bbox_m": list(bset.domain_bbox),
               "load_errors": list(bset.load_errors)}
    elif path.suffix.lower() == ".epw":
        site, records = weather.parse_epw(path)
        out = {"site": {"name": site.name, "latitude": site.latitude, "longitude": site.longitude,
                        "utc_offset_h": site.utc_offset, "altitude_m": site.altitude},
               "records": len(records),
               "t_air_c": [min(r.t_air_2m for r in records), max(r.t_air_2m for r in records)]}
    else:
        params = P.load_snapshot(path)
        out = {k: {"value": params[k], "level": params.level(k).label} for k in params}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_fixture(kind: str, out: Path) -> int:
    if kind == "canyon":
        path = fixtures.write_canyon(out)
    elif kind == "district":
        path = fixtures.write_district(out)
    else:
        target = out if out.suffix else out / "synthetic.epw"
        target.parent.mkdir(parents=True, exist_ok=True)
        path = fixtures.write_synthetic_epw(target)
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("run", "mitigate"):
            return _cmd_pipeline(args, args.command == "mitigate")
        if args.command == "inspect":
            return _cmd_inspect(args.path)
        return _cmd_fixture(args.kind, args.out)
    except (geometry.GeometryError, weather.WeatherError, P.ParamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
