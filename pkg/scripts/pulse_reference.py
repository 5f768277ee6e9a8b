"""Pulse problem against stored fine references: time ladder and mesh ladder.

The first call computes and stores the references under out/; later calls reuse them.
"""
import sys

from _common import run, summarize

extra = sys.argv[1:]
summarize("pulse, time ladder", run("reference", "pulse_time_reference.json", *extra), "tau")
summarize("pulse, mesh ladder", run("reference", "pulse_space_reference.json", *extra), "h")
