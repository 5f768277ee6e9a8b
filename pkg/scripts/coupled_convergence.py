"""Coupled ladder h = C tau^2 for the cubic problem; also writes cfl.csv."""
import sys

from _common import run, summarize

summarize("coupled", run("conv-coupled", "cubic_coupled.json", *sys.argv[1:]), "tau")
