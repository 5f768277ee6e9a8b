"""Every desk-scale experiment in sequence."""
import runpy
import sys
from pathlib import Path

here = Path(__file__).resolve().parent
for name in ("verify_suite", "space_convergence", "time_convergence", "coupled_convergence",
             "pulse_reference", "bump_chi_study"):
    print(f"== {name}", flush=True)
    try:
        runpy.run_path(str(here / f"{name}.py"), run_name="__main__")
    except SystemExit as exc:
        if exc.code:
            sys.exit(exc.code)
