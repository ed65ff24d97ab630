"""Command-line entry point: ``memcert certify | grid | simulate``.

Exit codes: 0 on success, 2 on invalid input data or arguments.  Warnings are
reported inside the output and never change the exit code.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .correlations import CountsTable, DataError
from .selftest import (
    CertificationReport, CertifyConfig, certify, scenario1_bound, scenario2_bound, scenario3_bound,
    ScenarioInputs, singlet_fidelity_bound,
)
from .simulate import load_model, sample_counts

EXIT_OK = 0
EXIT_DATA = 2

log = logging.getLogger("memcert")


def max_workers() -> int:
    env = os.environ.get("MEMCERT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DataError(f"MEMCERT_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise DataError(f"MEMCERT_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ReportDocument:
    report: CertificationReport
    inputs: dict
    version: str
    config: dict

    def to_json(self) -> dict:
        return {
            "report": self.report.to_dict(),
            "provenance": {"inputs": self.inputs, "version": self.version, "config": self.config},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ReportDocument":
        prov = doc["provenance"]
        return cls(CertificationReport.from_dict(doc["report"]), prov["inputs"], prov["version"], prov["config"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# -- certify -----------------------------------------------------------------

def cmd_certify(args) -> int:
    scenario = f"S{args.scenario}"
    cfg = CertifyConfig(scenario, args.assume_a, args.assume_b_in, args.assume_b_out)
    if scenario in ("S1", "S3") and not args.counts_in:
        raise DataError(f"scenario {args.scenario} requires --counts-in")
    inputs = {}
    counts_i = None
    if args.counts_in:
        counts_i = CountsTable.load(args.counts_in, "input")
        inputs["counts_in"] = {"path": args.counts_in, "sha256": sha256_file(args.counts_in)}
    counts_o = CountsTable.load(args.counts_out, "output")
    inputs["counts_out"] = {"path": args.counts_out, "sha256": sha256_file(args.counts_out)}
    report = certify(counts_i, counts_o, cfg)
    doc = ReportDocument(report, inputs, __version__, {
        "scenario": args.scenario, "assume_a": args.assume_a,
        "assume_b_in": args.assume_b_in, "assume_b_out": args.assume_b_out,
    })
    print(doc.dumps())
    return EXIT_OK


# -- grid --------------------------------------------------------------------

def parse_range(text: str, name: str) -> np.ndarray:
    """``a:b:n`` -> n evenly spaced points; a single number is one point."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) != 3:
            raise ValueError
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise DataError(f"{name}: malformed range {text!r}, expected a:b:n") from None
    if n < 1:
        raise DataError(f"{name}: number of points must be at least 1")
    return np.array([a]) if n == 1 else np.linspace(a, b, n)


def _grid_row(s_i: float, s_o: float, scenario: int, p_i: float, p_o: float) -> dict:
    f_i, f_o = singlet_fidelity_bound(s_i), singlet_fidelity_bound(s_o)
    warning = ""
    if scenario == 1:
        bound = scenario1_bound(f_i, f_o)
        if f_o <= 0.5 + 1e-12:
            warning = "f_o <= 1/2: no certification"
    elif scenario == 2:
        bound = scenario2_bound(f_o, p_o)[0]
    else:
        bound = scenario3_bound(ScenarioInputs(f_i, f_o, p_i, p_o, "S3"))[0]
    return {"s_i": s_i, "s_o": s_o, "f_i": f_i, "f_o": f_o, "bound": bound, "warning": warning}


def grid_rows(s_i: Sequence[float], s_o: Sequence[float], scenario: int = 1,
              p_i: float = 1.0, p_o: float = 1.0, workers: int = 1) -> list[dict]:
    points = [(a, b) for a in s_i for b in s_o]
    run = lambda pt: _grid_row(float(pt[0]), float(pt[1]), scenario, p_i, p_o)
    if workers <= 1 or scenario != 3:
        return [run(pt) for pt in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, points))


def format_grid(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s_i", "s_o", "f_i", "f_o", "bound", "warning"])
    for r in rows:
        w.writerow([f"{r[k]:.6f}" for k in ("s_i", "s_o", "f_i", "f_o", "bound")] + [r["warning"]])
    return buf.getvalue()


def cmd_grid(args) -> int:
    s_i = parse_range(args.s_i, "--s-i")
    s_o = parse_range(args.s_o, "--s-o")
    for name, arr in (("--s-i", s_i), ("--s-o", s_o)):
        if np.any(np.abs(arr) > 4):
            raise DataError(f"{name}: CHSH values must lie in [-4, 4]")
    for name, v in (("--p-i", args.p_i), ("--p-o", args.p_o)):
        if not 0 <= v <= 1:
            raise DataError(f"{name} must lie in [0, 1]")
    rows = grid_rows(s_i, s_o, args.scenario, args.p_i, args.p_o, max_workers())
    sys.stdout.write(format_grid(rows))
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.shots < 1:
        raise DataError("--shots must be at least 1")
    model = load_model(args.model)
    table = sample_counts(model, args.shots, args.seed, args.phase)
    print(json.dumps(table.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memcert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"memcert {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="certify a memory from Bell-test counts")
    c.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    c.add_argument("--counts-in", metavar="FILE", help="counts with the memory bypassed")
    c.add_argument("--counts-out", metavar="FILE", required=True, help="counts through the memory")
    for flag in ("--assume-a", "--assume-b-in", "--assume-b-out"):
        c.add_argument(flag, choices=("none", "sfs", "wfs"), default="none")
    c.set_defaults(func=cmd_certify)

    g = sub.add_parser("grid", help="bound over a grid of CHSH scores (CSV)")
    g.add_argument("--s-i", required=True, metavar="A:B:N")
    g.add_argument("--s-o", required=True, metavar="A:B:N")
    g.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    g.add_argument("--p-i", type=float, default=1.0, help="input conclusive probability (scenario 3)")
    g.add_argument("--p-o", type=float, default=1.0, help="output conclusive probability (scenarios 2, 3)")
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("simulate", help="sample counts from a model file")
    s.add_argument("--model", required=True, metavar="FILE")
    s.add_argument("--shots", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--phase", choices=("input", "output"), default="output")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="memcert: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, OSError, ValueError) as exc:
        print(f"memcert: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
