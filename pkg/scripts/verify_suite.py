"""Consistency and operator checks; exits nonzero if any check fails."""
import sys

from _common import ROOT
from llg_bdf2 import cli

sys.exit(cli.main(["verify", "--config", str(ROOT / "configs" / "verify.json"),
                   "--out", str(ROOT / "out" / "verify"), *sys.argv[1:]]))
