"""Command line interface: validate, solve, sweep, check.

Exit codes: 0 ok, 1 check or hypothesis failure, 2 usage or parse error,
3 no convergence, 4 box too small.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, checks, configfile, snapshot
from .analysis import locate_max
from .errors import (BoxTooSmall, ConfigError, DegenerateIterate, InvalidOrder, NoConvergence,
                     SplabError)
from .model import validate_hypotheses

log = logging.getLogger("splab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOCONV, EXIT_BOX = 0, 1, 2, 3, 4

CSV_HEADER = ["epsilon", "level", "x1", "x2", "x3", "V_at_max", "decay_rate", "rate_r2",
              "profile_l2", "holds_penalization"]


@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    timestamp: str = ""
    timings: dict = field(default_factory=dict)
    inventory: list = field(default_factory=list)

    def write(self, out: Path) -> None:
        self.inventory = sorted(set(self.inventory) | {"manifest.json"})
        data = {"config_hash": self.config_hash, "version": self.version, "timestamp": self.timestamp,
                "timings": self.timings, "inventory": self.inventory}
        (out / "manifest.json").write_text(json.dumps(data, indent=2) + "\n")


class _Usage(Exception):
    pass


def _g(x) -> str:
    return "%.17g" % float(x)


def _eps_tag(e: float) -> str:
    return repr(float(e)).replace(".", "p")


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".splab-write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise _Usage(f"output directory {out} is not writable: {exc}") from exc
    return out


def _load(args):
    exp = configfile.load(args.config)
    return configfile.with_overrides(exp, grid_n=getattr(args, "grid_n", None),
                                     grid_l=getattr(args, "grid_l", None), tol=getattr(args, "tol", None))


def _parse_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise _Usage(f"cannot parse list {text!r}") from exc


# commands --------------------------------------------------------------------

def cmd_validate(args) -> int:
    exp = configfile.load(args.config)
    failed = []
    for j, config in enumerate(configfile.region_problems(exp), 1):
        if exp.multiwell:
            print(f"region {j}")
        report = validate_hypotheses(config)
        print(report.format())
        failed += [r.name for r in report.failures() if r.name not in failed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


def cmd_solve(args) -> int:
    from .solver import solve_ground_state

    exp = _load(args)
    if args.epsilon is not None:
        exp = configfile.with_overrides(exp, epsilon=args.epsilon)
    config = exp.problem
    out = _prepare_out(args.out)
    config.check_box()
    manifest = RunManifest(configfile.config_hash(exp), timestamp=_now())
    t0 = time.perf_counter()
    sol = solve_ground_state(config)
    manifest.timings["solve"] = time.perf_counter() - t0
    mp = locate_max(sol.u, config.epsilon)
    summary = {"level": sol.level, "residual": sol.residual, "iterations": sol.iterations,
               "max_point": [float(c) for c in mp.point], "boundary_mass": sol.boundary_mass,
               "norm": sol.norm, "epsilon": config.epsilon, "converged": sol.converged,
               "flagged": sol.flagged}
    snapshot.write(out / "u.spgf", sol.u)
    snapshot.write(out / "phi.spgf", sol.phi)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "config.ini").write_text(configfile.serialize(exp))
    manifest.inventory += ["u.spgf", "phi.spgf", "summary.json", "config.ini"]
    manifest.write(out)
    print(f"level {sol.level:.12g}  residual {sol.residual:.3e}  |u| {sol.norm:.6g}  "
          f"iterations {sol.iterations}  max point ({configfile.point_str(mp.point)})")
    return EXIT_OK


def _row(rec) -> list[str]:
    if not rec.ok:
        return [_g(rec.epsilon)] + ["nan"] * 8 + ["failed"]
    x = rec.max_point
    return [_g(rec.epsilon), _g(rec.level), _g(x[0]), _g(x[1]), _g(x[2]), _g(rec.V_at_max),
            _g(rec.decay_rate), _g(rec.rate_r2), _g(rec.profile_distance),
            "true" if rec.holds_penalization else "false"]


def _write_csv(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(_row(rec))


def _write_run(out: Path, run, prefix: str, manifest: RunManifest) -> None:
    _write_csv(out / f"{prefix}.csv", [rec for _, rec in run])
    manifest.inventory.append(f"{prefix}.csv")
    for sol, rec in run:
        if sol is None:
            continue
        name = f"{prefix}_u_eps{_eps_tag(rec.epsilon)}.spgf"
        snapshot.write(out / name, sol.u)
        manifest.inventory.append(name)


def cmd_sweep(args) -> int:
    from .solver import _check_descending, continuation_sweep, limit_reference, multiwell_sweep

    exp = _load(args)
    epsilons = _parse_list(args.epsilons) if args.epsilons else list(exp.epsilons)
    _check_descending(epsilons)
    out = _prepare_out(args.out)
    config = exp.problem
    manifest = RunManifest(configfile.config_hash(exp), timestamp=_now())

    t0 = time.perf_counter()
    ref = limit_reference(config)
    manifest.timings["limit_reference"] = time.perf_counter() - t0
    snapshot.write(out / "reference.spgf", ref.u)
    manifest.inventory.append("reference.spgf")

    t0 = time.perf_counter()
    if args.wells and exp.multiwell:
        result = multiwell_sweep(config, exp.regions, epsilons, jobs=args.jobs)
        runs = result.runs
        for j, run in enumerate(runs, 1):
            _write_run(out, run, f"sweep_well{j}", manifest)
        if result.collision:
            print(f"warning: {result.collision}", file=sys.stderr)
    else:
        run = continuation_sweep(config, epsilons, reference=ref.u, callback=_progress)
        runs = [run]
        _write_run(out, run, "sweep", manifest)
    manifest.timings["sweep"] = time.perf_counter() - t0
    (out / "config.ini").write_text(configfile.serialize(exp))
    manifest.inventory.append("config.ini")
    manifest.write(out)

    records = [rec for run in runs for _, rec in run]
    for rec in records:
        if not rec.ok:
            print(f"eps={rec.epsilon:g}: {rec.failed}", file=sys.stderr)
    if any(rec.ok for rec in records):
        return EXIT_OK
    if all((rec.failed or "").startswith("BoxTooSmall") for rec in records):
        return EXIT_BOX
    return EXIT_NOCONV


def _progress(rec) -> None:
    if rec.ok:
        log.info("eps=%g level=%.10g iterations=%d", rec.epsilon, rec.level, rec.iterations)


def cmd_check(args) -> int:
    rows = checks.run_suite(args.suite, jobs=args.jobs)
    print(checks.format_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .solver import default_jobs

    parser = argparse.ArgumentParser(prog="splab", description="Schrodinger-Poisson ground state lab")
    parser.add_argument("--version", action="version", version=f"splab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--grid-n", type=int, help="grid points per axis (radial: N_r)")
        p.add_argument("--grid-l", type=float, help="box side (radial: R_max)")
        p.add_argument("--tol", type=float, help="relative residual tolerance")
        p.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")

    p = sub.add_parser("validate", help="check the structural hypotheses of a config")
    p.add_argument("config", help="config file or bundled name (single_well, two_well)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="penalized ground state at one epsilon")
    p.add_argument("config")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", default="splab-out")
    overrides(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="continuation in epsilon with concentration diagnostics")
    p.add_argument("config")
    p.add_argument("--epsilons", help="comma separated, strictly descending")
    p.add_argument("--wells", action="store_true", help="one sweep per region of a multi-well config")
    p.add_argument("--out", default="splab-sweep")
    overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run an oracle suite")
    p.add_argument("--suite", required=True, choices=checks.SUITES)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (_Usage, ConfigError, InvalidOrder) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BoxTooSmall as exc:
        print(f"box too small: {exc}", file=sys.stderr)
        return EXIT_BOX
    except (NoConvergence, DegenerateIterate) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except SplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
