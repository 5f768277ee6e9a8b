import sys
from pathlib import Path

import numpy as np

from llg_bdf2 import cli, harness
from llg_bdf2.verify import fit_order

ROOT = Path(__file__).resolve().parent.parent


def run(mode, config, *extra):
    """Run one CLI mode on a config under configs/ and return the table rows."""
    path = ROOT / "configs" / config
    cfg = harness.load_config(path)
    out = ROOT / cfg.out
    code = cli.main([mode, "--config", str(path), "--out", str(out), *extra])
    if code != 0:
        sys.exit(code)
    table = out / "table.csv"
    return harness.read_table(table) if table.exists() else []


def summarize(title, rows, varied):
    key = "err_H1_max" if rows and rows[0].get("err_H1_max") is not None else "err_H1_final"
    x = np.array([r[varied] for r in rows])
    e = np.array([r[key] for r in rows])
    print(f"{title}: fitted {key} order in {varied} = {fit_order(x, e):.3f} "
          f"(last increment {rows[-1]['rate_H1']:.3f})")
