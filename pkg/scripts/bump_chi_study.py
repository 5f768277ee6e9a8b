"""Temporal rates of the bump problem as the pole of g(t) approaches T (no threshold).

Errors are taken against a time-refined reference on the same mesh, which removes
the spatial error floor that hides the temporal rate at desk mesh sizes.
"""
import sys

from _common import run, summarize

for chi in ("1", "0.01"):
    summarize(f"bump chi={chi}", run("reference", f"bump_chi_{chi}.json", *sys.argv[1:]), "tau")
