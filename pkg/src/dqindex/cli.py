"""Command line: ``dqindex verify | explain | list-suites``.

Reports are JSON with exact residuals.  Timings are off by default so that
the same scenario and seed give a byte-identical report; ``--timings`` fills
in ``millis``.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import checks
from .scenario import SUITES, Scenario, ScenarioError, bundled, load, validate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _resolve(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    if p.suffix == "" and "/" not in spec:
        return bundled(spec)
    raise ScenarioError(f"no such scenario file {spec!r}")


def _load(path: Path, seed: int | None, suites: list[str] | None) -> Scenario:
    sc = load(path)
    if seed is not None:
        sc.seed = seed
    if suites is not None:
        sc.suites = list(dict.fromkeys(suites))
        validate(sc)
    return sc


def _suite_worker(args):
    path, seed, suites, name = args
    sc = _load(Path(path), seed, suites)
    return name, checks.run_suite(sc, name)


def run(path: Path, *, seed: int | None = None, suites: list[str] | None = None,
        jobs: int = 1, timings: bool = False) -> dict:
    """Execute the scenario's suites and assemble the report dict."""
    sc = _load(path, seed, suites)
    if jobs > 1 and len(sc.suites) > 1:
        work = [(str(path), seed, suites, name) for name in sc.suites]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = dict(pool.map(_suite_worker, work))
    else:
        done = {name: checks.run_suite(sc, name) for name in sc.suites}
    return {
        "environment": sc.environment(),
        "suites": [{"name": name, "checks": [r.as_dict(timings) for r in done[name]]}
                   for name in sorted(done)],
    }


def passed(report: dict) -> bool:
    return all(c["status"] == "pass" for s in report["suites"] for c in s["checks"])


def _summary(report: dict) -> str:
    lines = []
    for s in report["suites"]:
        n = len(s["checks"])
        ok = sum(c["status"] == "pass" for c in s["checks"])
        lines.append(f"{s['name']}: {ok}/{n} pass")
        lines += [f"  {c['status'].upper()} {c['id']}: {c['residual'][:200]}"
                  for c in s["checks"] if c["status"] != "pass"]
    lines.append("PASS" if passed(report) else "FAIL")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dqindex", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    v = sub.add_parser("verify", help="run verification suites on a scenario")
    v.add_argument("scenario", help="scenario JSON file or bundled name "
                                    "(flat_plane, torus, curved_plane)")
    v.add_argument("--suite", action="append", choices=SUITES, metavar="NAME",
                   help="suite to run (repeatable); overrides the scenario's list")
    v.add_argument("--seed", type=int, help="override the scenario seed")
    v.add_argument("--out", type=Path, help="write the JSON report here")
    v.add_argument("--jobs", type=int, default=1, help="worker processes, one suite each")
    v.add_argument("--timings", action="store_true", help="record millis per check")
    e = sub.add_parser("explain", help="print what identity a check verifies")
    e.add_argument("check")
    sub.add_parser("list-suites", help="list suites and their checks")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "list-suites":
        by_suite: dict[str, list[str]] = {s: [] for s in SUITES}
        for cid, (suite, _) in checks.ANCHORS.items():
            by_suite[suite].append(cid)
        for s in SUITES:
            print(f"{s}: {', '.join(sorted(by_suite[s]))}")
        return EXIT_OK
    if args.cmd == "explain":
        try:
            print(checks.explain(args.check))
        except checks.UnknownCheck:
            print(f"error: unknown check {args.check!r}", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK
    try:
        path = _resolve(args.scenario)
        report = run(path, seed=args.seed, suites=args.suite, jobs=max(1, args.jobs),
                     timings=args.timings)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = json.dumps(report, indent=2) + "\n"
    if args.out is not None:
        args.out.write_text(text)
        print(_summary(report))
    else:
        sys.stdout.write(text)
        print(_summary(report), file=sys.stderr)
    return EXIT_OK if passed(report) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
