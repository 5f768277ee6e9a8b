"""Spatial convergence of the cubic problem at tau = 1e-3 (crisscross and diagonal ladders)."""
import sys

from _common import run, summarize

extra = sys.argv[1:]  # e.g. --deterministic
summarize("crisscross", run("conv-space", "cubic_space.json", *extra), "h")
summarize("diagonal", run("conv-space", "cubic_diagonal_space.json", *extra), "h")
