"""Command-line front end: eqindex <subcommand> [--config PATH ...] [--out DIR]."""
import argparse
import contextvars
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

from . import scalars as S
from .acceptance import run_acceptance
from .runner import ScenarioError, load_scenario, run_scenario

SUBCOMMANDS = {
    "index": ("fixed_point_index", "s2_rotation_index.yaml"),
    "cm": ("cm_cocycle", "torus_cm.yaml"),
    "jlo-limit": ("jlo_limit", "torus_jlo_limit.yaml"),
    "heat-trace": ("heat_trace", "sphere_heat_trace.yaml"),
    "jlo-numeric": ("jlo_numeric", "torus_jlo_numeric.yaml"),
    "volterra-check": ("volterra_check", "volterra_check.yaml"),
}

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_CONFIG = 0, 1, 2


def default_scenario(name):
    return str(resources.files("eqindex").joinpath("scenarios", name))


def build_parser():
    p = argparse.ArgumentParser(prog="eqindex", description="Equivariant index, heat-trace and cocycle computations.")
    sub = p.add_subparsers(dest="command", required=True)
    for cmd in list(SUBCOMMANDS) + ["verify"]:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", action="append", metavar="PATH",
                        help="scenario file (repeatable); defaults to the bundled example")
        sp.add_argument("--out", default="reports", metavar="DIR", help="report directory")
        sp.add_argument("--precision", choices=[S.EXACT, S.F64], default=None)
        sp.add_argument("--threads", type=int, default=1, metavar="N")
        sp.add_argument("--filter", default=None, metavar="NAME", help="verify: run matching criteria only")
    return p


def cmd_scenarios(args):
    kind, default = SUBCOMMANDS[args.command]
    paths = args.config or [default_scenario(default)]
    docs = []
    for p in paths:
        try:
            docs.append(load_scenario(p))
        except ScenarioError as exc:
            print(f"error: {p}: {exc}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        if docs[-1]["kind"] != kind:
            print(f"error: {p}: field 'kind': '{docs[-1]['kind']}' does not match subcommand "
                  f"'{args.command}' (expected '{kind}')", file=sys.stderr)
            return EXIT_BAD_CONFIG

    def go(doc):
        return run_scenario(doc, args.out, args.precision, max(1, args.threads))

    try:
        if len(docs) > 1 and args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                futs = [pool.submit(contextvars.copy_context().run, go, d) for d in docs]
                summaries = [f.result() for f in futs]
        else:
            summaries = [go(d) for d in docs]
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    ok = True
    for s in summaries:
        for c in s["checks"]:
            status = "PASS" if c["pass"] else "FAIL"
            print(f"[{status}] {s['scenario']}: {c['name']}")
            ok &= c["pass"]
        print(f"wrote {', '.join(os.path.join(args.out, f) for f in sorted(s['files'].values()))}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_verify(args):
    results = run_acceptance(args.filter, echo=print)
    if not results:
        print(f"no criteria match filter {args.filter!r}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        doc = {"schema_version": 1, "scenario": "verify",
               "checks": [{"name": f"{r.number:02d}-{r.name}", "pass": r.passed,
                           "detail": {"measured": r.measured, "tolerance": r.tolerance}} for r in results]}
        with open(os.path.join(args.out, "verify.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK if passed == len(results) else EXIT_CHECK_FAILED


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: field '--threads': must be >= 1", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if args.command == "verify":
        return cmd_verify(args)
    return cmd_scenarios(args)


if __name__ == "__main__":
    sys.exit(main())
