"""Temporal convergence of the cubic problem on the n = 64 crisscross mesh."""
import sys

from _common import run, summarize

rows = run("conv-time", "cubic_time.json", *sys.argv[1:])
summarize("cubic, all rows", rows, "tau")
summarize("cubic, last two rows", rows[-2:], "tau")
