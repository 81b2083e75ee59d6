"""Command-line front end.

Exit codes: 0 success, 2 I/O or malformed JSON, 3 validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import camera as cam_mod
from .geometry import blind_area_fraction, build_position_map, signature_key
from .harness import fmt_number
from .scenario import Scenario, ScenarioError, load_scenario
from .sim import atomic_write, build_setup, run_scenario

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3

log = logging.getLogger("fencesim")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID, f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"{path}: malformed JSON: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc.strerror or exc}") from None


def _guarded(path, fn, *args):
    try:
        return fn(*args)
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID, f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"{path}: malformed JSON: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc.strerror or exc}") from None


def _out_dir(sc: Scenario, args, many: bool) -> Path:
    if args.out is not None:
        return Path(args.out) / sc.name if many else Path(args.out)
    if sc.output is not None:
        p = Path(sc.output)
        return p if p.is_absolute() else sc.base_dir / p
    return Path("out") / sc.name


def _simulate_one(sc: Scenario, out: Path) -> tuple[str, list[str]]:
    report = run_scenario(sc)
    written = report.write(out)
    return sc.name, [str(p) for p in written]


def cmd_simulate(args) -> int:
    scenarios = []
    for path in args.scenario:
        sc = _load(path)
        if args.seed is not None:
            sc.seed = args.seed
        # validate everything, including trajectory files, before writing anything
        _guarded(path, build_setup, sc)
        scenarios.append(sc)
    many = len(scenarios) > 1
    outs = [_out_dir(sc, args, many) for sc in scenarios]
    if len({str(o.resolve()) for o in outs}) != len(outs):
        raise CliError(EXIT_INVALID, "two scenarios would write to the same output directory")
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, scenarios, outs))
    else:
        results = [_simulate_one(sc, out) for sc, out in zip(scenarios, outs)]
    for (name, files), out in zip(results, outs):
        print(f"{name}: wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_pixel_table(args) -> int:
    if any(not d > 0 for d in args.distances):
        raise CliError(EXIT_INVALID, "--distances: every distance must be positive")
    w, h = args.animal
    if w < 0 or h < 0:
        raise CliError(EXIT_INVALID, "--animal: dimensions must be non-negative")
    cam = cam_mod.CameraSpec()
    if args.config is not None:
        sc = _load(args.config)
        setup = _guarded(args.config, build_setup, sc, False)
        cam = setup.camera
        if args.animal_given is False:
            w, h = setup.animal
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\r\n")
    out.writerow(["distance", "pixelsW", "pixelsH"])
    for d in args.distances:
        pw, ph = cam_mod.pixel_occupancy(cam, d, (w, h))
        out.writerow([fmt_number(d), pw, ph])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _layout_records(sc: Scenario) -> list[dict]:
    setup = build_setup(sc, with_scripts=False)
    records = []
    for layout in setup.layouts:
        pmap = build_position_map(layout, sc.grid_resolution)
        d = layout.to_dict()
        d["band"] = setup.band
        d["blindFraction"] = blind_area_fraction(layout, setup.band, sc.grid_resolution)
        d.update(pmap.to_dict())
        records.append(d)
    return records


def _layout_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["layout", "record", "id", "signature", "x", "y", "value"])
    for r in records:
        for s in r["sensors"]:
            w.writerow([r["kind"], "sensor", s["id"], "", repr(s["position"][0]), repr(s["position"][1]), s["orientation"]])
        for g in r["regions"]:
            x, y = g["representative"]
            w.writerow([r["kind"], "region", g["id"], signature_key(g["signature"]), repr(x), repr(y), g["cells"]])
        w.writerow([r["kind"], "blindFraction", "", "", "", "", repr(r["blindFraction"])])
    return buf.getvalue()


def cmd_layout(args) -> int:
    sc = _load(args.scenario)
    records = _guarded(args.scenario, _layout_records, sc)
    if args.export is None:
        for r in records:
            print(f"layout {r['kind']}: {len(r['sensors'])} sensors, {len(r['regions'])} regions, "
                  f"blind fraction {r['blindFraction']:.4f} (band {fmt_number(r['band'])} m)")
        return EXIT_OK
    target = Path(args.export)
    if target.suffix.lower() == ".csv":
        text = _layout_csv(records)
    elif target.suffix.lower() == ".json":
        text = json.dumps({"name": sc.name, "layouts": records}, indent=2, sort_keys=True) + "\n"
    else:
        raise CliError(EXIT_INVALID, f"--export: unsupported extension {target.suffix!r} (use .json or .csv)")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(target, text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{target}: {exc.strerror or exc}") from None
    print(f"wrote {target}")
    return EXIT_OK


def cmd_budget(args) -> int:
    sc = Scenario() if args.config is None else _load(args.config)
    setup = _guarded(args.config or "<defaults>", build_setup, sc, False)
    b, c = setup.budget, setup.cost
    print("Latency budget (s)")
    for s in b.steps:
        print(f"  {s.name}: {fmt_number(s.min)} ~ {fmt_number(s.max)}")
    print(f"In total: {b.total_min:.2f} {b.total_max:.2f}")
    print("Cost")
    for it in c.items:
        print(f"  {it.device}: {fmt_number(it.unit_cost)} x {fmt_number(it.quantity)} = {fmt_number(it.total)}")
    print(f"In total: {fmt_number(c.total)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fencesim", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("-v", "--verbose", action="store_true", help="log stale readings and rejected frames")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run scenario files and write report.json plus CSVs")
    s.add_argument("scenario", nargs="+")
    s.add_argument("--out", help="output directory (one sub-directory per scenario when several are given)")
    s.add_argument("--seed", type=int, help="overrides the scenario seed and FENCESIM_SEED")
    s.add_argument("--jobs", type=int, default=1, help="run independent scenarios in parallel")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pixel-table", help="pixels an animal occupies at each distance (CSV)")
    s.add_argument("--distances", type=float, nargs="+", default=[10.0 * i for i in range(1, 9)])
    s.add_argument("--animal", type=float, nargs=2, metavar=("W", "H"), default=None)
    s.add_argument("--config", help="scenario file supplying camera and animal settings")
    s.set_defaults(func=cmd_pixel_table)

    s = sub.add_parser("layout", help="sensor poses, coverage regions and blind-area fraction")
    s.add_argument("scenario")
    s.add_argument("--export", help="write .json or .csv instead of printing a summary")
    s.set_defaults(func=cmd_layout)

    s = sub.add_parser("budget", help="latency budget and cost totals")
    s.add_argument("--config", help="scenario file with 'budget' and/or 'cost' entries")
    s.set_defaults(func=cmd_budget)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "pixel-table":
        args.animal_given = args.animal is not None
        if args.animal is None:
            args.animal = list(cam_mod.ANIMAL_SIZE)
    if args.command == "simulate" and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"fencesim: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
