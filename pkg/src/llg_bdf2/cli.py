"""Command line entry point ``llg``.

Exit codes: 0 success, 1 bad configuration or failed verification,
2 invariant violation, 3 linear solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .integrator import InvariantViolation
from .mesh import MeshError
from .sparse import SolverError
from .verify import run_verify_suite

log = logging.getLogger("llg")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_SOLVER = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llg", description="BDF2 tangent-plane LLG solver and convergence harness")
    p.add_argument("mode", choices=harness.MODES)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--paper-scale", action="store_true", help="lift the desk-scale mesh and step limits")
    p.add_argument("--deterministic", action="store_true", help="omit wall times so outputs are byte-stable")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_json(path: Path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def execute(cfg: harness.RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.mode

    if mode == "run":
        steps, summary = harness.single_run(cfg)
        cols = [c for c in steps[0] if not (cfg.deterministic and c == "wall_time")]
        harness.write_table(out / "steps.csv", steps, cols)
        _write_json(out / "summary.json", summary)
        log.info("run finished: %s", summary)
        return EXIT_OK

    if mode == "verify":
        rows = run_verify_suite(cfg.spec(), quick=cfg.quick)
        harness.write_table(out / "verify.csv", rows, ("check", "value", "threshold", "passed"))
        for r in rows:
            print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']} = {r['value']!r} ({r['threshold']})")
        return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CONFIG

    if mode == "plot":
        src = Path(cfg.table) if cfg.table else out / "table.csv"
        rows = harness.read_table(src)
        varied = harness.varied_parameter(rows)
        (out / "convergence.svg").write_text(harness.table_svg(rows, varied, title=cfg.problem))
        return EXIT_OK

    if mode == "reference":
        rows = harness.reference_study(cfg, out_dir=out)
    else:
        rows = harness.convergence_study(cfg)
        if mode == "conv-coupled":
            harness.write_table(out / "cfl.csv", harness.cfl_rows(rows),
                                ("level", "h", "tau", "h_over_tau_sq", "cfl_ratio", "energy_cfl"))
    harness.write_table(out / "table.csv", rows)
    if cfg.plot:
        varied = "h" if mode == "conv-space" or (mode == "reference" and len(cfg.levels) > 1) else "tau"
        (out / "convergence.svg").write_text(harness.table_svg(rows, varied, title=cfg.problem))
    sys.stdout.write(harness.table_csv(rows))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = harness.load_config(args.config, mode=args.mode, out=args.out,
                                  deterministic=True if args.deterministic else None,
                                  paper_scale=True if args.paper_scale else None)
        return execute(cfg)
    except InvariantViolation as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (harness.ConfigError, MeshError, KeyError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
