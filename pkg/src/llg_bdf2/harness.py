"""Convergence studies, reference solutions and their file outputs.

A study is a ladder of independent cells (one mesh and one step count each).
Cells run in a process pool capped by ``LLG_THREADS``; results are collected
in ladder order so the output does not depend on scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .fem import P1Space, field_norms
from .integrator import SimConfig, check_invariants, eta_indicators, interpolate_in_time, run_simulation
from .mesh import MeshError, TriMesh, build_mesh, diagonal_unit_square, prolong, uniform_bisection
from .problems import ProblemSpec, get_problem

MODES = ("run", "conv-space", "conv-time", "conv-coupled", "reference", "verify", "plot")
FAMILIES = ("crisscross", "diagonal")
TABLE_FIELDS = ("level", "h", "tau", "err_L2_final", "err_H1_final", "err_L2_max", "err_H1_max",
                "rate_L2", "rate_H1", "energy_final", "min_nodal_len", "max_nodal_len",
                "eta0", "etan", "wall_time_s")

# desk-scale caps, lifted by --paper-scale
DESK_MAX_TRIANGLES = 4 * 64 ** 2
DESK_MAX_STEPS = 2000
# errors below this are round-off; rates between them are left blank
ERROR_FLOOR = 1e-14


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------

@dataclass
class ReferenceConfig:
    kind: str = "time"  # "time": same mesh, finer tau; "space": finer mesh, same tau
    refine: int = 6  # time kind: tau_ref = min(taus) / 2**refine
    level: Optional[int] = None  # space kind: mesh level of the reference
    path: Optional[str] = None  # reuse a stored reference instead of recomputing

    def __post_init__(self):
        if self.kind not in ("time", "space"):
            raise ConfigError(f"reference kind must be 'time' or 'space', got {self.kind!r}")
        if self.refine < 1:
            raise ConfigError("reference.refine must be positive")


@dataclass
class RunConfig:
    mode: str = "run"
    problem: str = "cubic"
    alpha: Optional[float] = None
    lambda_sq: Optional[float] = None
    T: Optional[float] = None
    family: str = "crisscross"
    n: int = 8
    levels: list = field(default_factory=lambda: [0])
    taus: list = field(default_factory=lambda: [1e-3])
    reference: Optional[ReferenceConfig] = None
    solver: str = "auto"
    plot: bool = False
    deterministic: bool = False
    paper_scale: bool = False
    out: str = "out"
    table: Optional[str] = None  # plot mode: CSV to draw
    quick: bool = False  # verify mode: shorter ladders

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown mesh family {self.family!r}")
        if isinstance(self.levels, int):
            self.levels = [self.levels]
        if isinstance(self.taus, (int, float)):
            self.taus = [float(self.taus)]
        self.levels = [int(v) for v in self.levels]
        self.taus = [float(v) for v in self.taus]
        if isinstance(self.reference, dict):
            self.reference = _from_dict(ReferenceConfig, self.reference)
        for name in ("alpha", "lambda_sq", "T"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n < 1 or any(v < 0 for v in self.levels) or any(not t > 0 for t in self.taus):
            raise ConfigError("n, levels and taus must be positive")
        if self.mode in ("conv-space",) and len(self.levels) < 2:
            raise ConfigError("conv-space needs at least two levels")
        if self.mode in ("conv-time",) and len(self.taus) < 2:
            raise ConfigError("conv-time needs at least two time steps")
        if self.mode == "conv-coupled":
            if len(self.levels) < 2 or len(self.levels) != len(self.taus):
                raise ConfigError("conv-coupled needs paired levels and taus of length >= 2")
        get_problem(self.problem)  # fail early on unknown ids

    def spec(self) -> ProblemSpec:
        return get_problem(self.problem, alpha=self.alpha, lambda_sq=self.lambda_sq, T=self.T)


def _from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    return cls(**data)


def load_config(path, **overrides) -> RunConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return _from_dict(RunConfig, data)


# -- cells ----------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    index: int
    problem: str
    params: tuple  # (alpha, lambda_sq, T) overrides, None for the problem defaults
    family: str
    n: int
    level: int
    num_steps: int
    solver: str = "auto"
    keep_final: bool = False


def steps_for(T: float, tau: float) -> int:
    N = T / tau
    if abs(N - round(N)) > 1e-8 * max(1.0, N):
        raise ConfigError(f"tau = {tau!r} does not divide T = {T!r}")
    return int(round(N))


def check_desk_limits(cell: Cell, paper_scale: bool):
    if paper_scale:
        return
    tris = (4 * (cell.n * 2 ** cell.level) ** 2 if cell.family == "crisscross"
            else 2 * cell.n ** 2 * 2 ** cell.level)
    if tris > DESK_MAX_TRIANGLES:
        raise ConfigError(f"mesh with {tris} triangles exceeds the desk limit; use --paper-scale")
    if cell.num_steps > DESK_MAX_STEPS:
        raise ConfigError(f"{cell.num_steps} steps exceed the desk limit; use --paper-scale")


def run_cell(cell: Cell) -> dict:
    """Run one ladder cell; returns a row dict plus the final field if requested."""
    alpha, lambda_sq, T = cell.params
    problem = get_problem(cell.problem, alpha=alpha, lambda_sq=lambda_sq, T=T)
    mesh = build_mesh(cell.family, cell.n, cell.level)
    config = SimConfig.for_problem(problem, cell.num_steps, solver=cell.solver)
    traj = run_simulation(problem, mesh, config)
    inv = check_invariants(traj)
    eta0, etan = eta_indicators(traj)
    out = dict(
        level=cell.index,
        h=mesh.h,
        tau=config.tau,
        energy_final=traj.records[-1].energy,
        min_nodal_len=inv["min_length"],
        max_nodal_len=inv["max_length"],
        eta0=eta0,
        etan=etan,
        wall_time_s=traj.wall_time,
        invariants=inv,
    )
    if problem.exact is not None:
        out.update(err_L2_final=traj.final_error("l2"), err_H1_final=traj.final_error("h1"),
                   err_L2_max=traj.max_error("l2"), err_H1_max=traj.max_error("h1"))
    if cell.keep_final:
        out["m_final"] = interpolate_in_time(traj, config.T)
    return out


def worker_count() -> int:
    raw = os.environ.get("LLG_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def run_cells(cells: list, workers: Optional[int] = None) -> list:
    workers = min(workers or worker_count(), len(cells))
    if workers <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells))


# -- tables --------------------------------------------------------------------

def add_rates(rows: list, varied: str) -> list:
    """rate = log(e_{i-1}/e_i) / log(p_{i-1}/p_i) for the varied parameter p.

    Uses the max-over-steps errors when present, else the final-time errors.
    Rates are left undefined when either error is at round-off level.
    """
    for i, row in enumerate(rows):
        row["rate_L2"] = row["rate_H1"] = None
        if i == 0:
            continue
        prev = rows[i - 1]
        for norm in ("L2", "H1"):
            key = f"err_{norm}_max" if rows[i].get(f"err_{norm}_max") is not None else f"err_{norm}_final"
            a, b = prev.get(key), row.get(key)
            pa, pb = prev[varied], row[varied]
            if a is not None and b is not None and min(a, b) > ERROR_FLOOR and pa != pb:
                row[f"rate_{norm}"] = math.log(a / b) / math.log(pa / pb)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def table_csv(rows: list, columns=TABLE_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_table(path, rows: list, columns=TABLE_FIELDS):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(table_csv(rows, columns))


def read_table(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            if v == "":
                conv[k] = None
            elif k == "level":
                conv[k] = int(v)
            else:
                conv[k] = float(v)
        out.append(conv)
    return out


def finalize_rows(results: list, varied: str, deterministic: bool) -> list:
    rows = []
    for r in results:
        row = {k: r.get(k) for k in TABLE_FIELDS}
        if deterministic:
            row["wall_time_s"] = None
        rows.append(row)
    return add_rates(rows, varied)


# -- SVG --------------------------------------------------------------------------

def loglog_svg(series: dict, xlabel: str, slopes=(1, 2), title: str = "",
               width: int = 480, height: int = 360) -> str:
    """Log-log plot with one polyline per series and slope reference triangles."""
    pts = {k: [(x, y) for x, y in v if x and y and x > 0 and y > 0] for k, v in series.items()}
    allx = [p[0] for v in pts.values() for p in v]
    ally = [p[1] for v in pts.values() for p in v]
    ml, mr, mt, mb = 64, 16, 28, 44
    pw, ph = width - ml - mr, height - mt - mb
    if not allx:
        allx, ally = [1.0, 10.0], [1.0, 10.0]
    lx0, lx1 = math.log10(min(allx)), math.log10(max(allx))
    ly0, ly1 = math.log10(min(ally)), math.log10(max(ally))
    if lx1 - lx0 < 1e-12:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    if ly1 - ly0 < 1e-12:
        ly0, ly1 = ly0 - 0.5, ly1 + 0.5
    padx, pady = 0.05 * (lx1 - lx0), 0.08 * (ly1 - ly0)
    lx0, lx1, ly0, ly1 = lx0 - padx, lx1 + padx, ly0 - pady, ly1 + pady

    def X(x):
        return ml + (math.log10(x) - lx0) / (lx1 - lx0) * pw

    def Y(y):
        return mt + (ly1 - math.log10(y)) / (ly1 - ly0) * ph

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    for e in range(math.ceil(lx0), math.floor(lx1) + 1):
        x = X(10.0 ** e)
        out.append(f'<line x1="{x:.2f}" y1="{mt + ph}" x2="{x:.2f}" y2="{mt + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">1e{e}</text>')
    for e in range(math.ceil(ly0), math.floor(ly1) + 1):
        y = Y(10.0 ** e)
        out.append(f'<line x1="{ml - 4}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" stroke="#000"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 3:.2f}" text-anchor="end" font-size="10">1e{e}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    for i, (name, p) in enumerate(pts.items()):
        if not p:
            continue
        c = colors[i % len(colors)]
        coords = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y in sorted(p))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        for x, y in p:
            out.append(f'<circle cx="{X(x):.2f}" cy="{Y(y):.2f}" r="2.5" fill="{c}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * i}" font-size="11" fill="{c}">{escape(name)}</text>')
    # slope triangles in the lower right, one decade wide at most
    span = min(0.3 * (lx1 - lx0), 1.0)
    for k, s in enumerate(slopes):
        xa = lx1 - padx - span
        xb = lx1 - padx
        ya = ly0 + pady + 0.05 * (ly1 - ly0) + k * 0.25 * (ly1 - ly0)
        yb = ya + s * span
        p1, p2, p3 = (X(10 ** xa), Y(10 ** ya)), (X(10 ** xb), Y(10 ** ya)), (X(10 ** xb), Y(10 ** yb))
        out.append(f'<polygon class="slope" fill="none" stroke="#555" stroke-dasharray="3,2" '
                   f'points="{p1[0]:.2f},{p1[1]:.2f} {p2[0]:.2f},{p2[1]:.2f} {p3[0]:.2f},{p3[1]:.2f}"/>')
        out.append(f'<text x="{p2[0] + 3:.2f}" y="{(p2[1] + p3[1]) / 2:.2f}" font-size="10">{s}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def table_svg(rows: list, varied: str, title: str = "") -> str:
    series = {}
    for norm in ("L2", "H1"):
        key = f"err_{norm}_max" if any(r.get(f"err_{norm}_max") is not None for r in rows) else f"err_{norm}_final"
        series[key] = [(r[varied], r.get(key)) for r in rows]
    slopes = (1, 2) if varied == "h" else (2,)
    return loglog_svg(series, varied, slopes=slopes, title=title)


def varied_parameter(rows: list) -> str:
    hs = {r["h"] for r in rows}
    return "tau" if len(hs) == 1 else "h"


# -- reference persistence -----------------------------------------------------

REF_MAGIC = b"LLGREF\x00\x00"
REF_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


def mesh_hash(mesh: TriMesh) -> str:
    h = hashlib.sha256()
    h.update(mesh.family.encode())
    h.update(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.triangles, dtype="<i8").tobytes())
    return h.hexdigest()


def mesh_chain(family: str, n: int, level: int) -> list:
    """Meshes of levels 0..level, each nested in its predecessor."""
    if family == "crisscross":
        return [build_mesh(family, n, k) for k in range(level + 1)]
    chain = [diagonal_unit_square(n)]
    for _ in range(level):
        chain.append(uniform_bisection(chain[-1]))
    return chain


def lineage_hashes(family: str, n: int, level: int) -> list:
    return [mesh_hash(m) for m in mesh_chain(family, n, level)]


def prolong_chain(values: np.ndarray, chain: list, start: int) -> np.ndarray:
    """Prolong nodal values from ``chain[start]`` to ``chain[-1]``."""
    for i in range(start, len(chain) - 1):
        values = prolong(chain[i], values, chain[i + 1])
    return values


def save_reference(path, field_values: np.ndarray, meta: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(field_values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(REF_MAGIC, REF_VERSION, arr.shape[0]))
        fh.write(arr.tobytes())
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_reference(path):
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("reference file truncated")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != REF_MAGIC:
        raise ValueError("not a reference file")
    if version != REF_VERSION:
        raise ValueError(f"unsupported reference version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 24 * n:
        raise ValueError("reference payload size does not match node count")
    values = np.frombuffer(body, dtype="<f8").reshape(n, 3).copy()
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    return values, meta


def compare_fields(space: P1Space, reference: np.ndarray, candidate: np.ndarray):
    l2, semi = field_norms(space, reference - candidate)
    return float(l2), float(math.hypot(l2, semi))


def check_lineage(meta: dict, family: str, n: int, level: int):
    """Reject candidates whose mesh is not in the reference mesh lineage."""
    own = mesh_hash(build_mesh(family, n, level))
    if own not in meta.get("lineage", []):
        raise MeshError("candidate mesh is not in the reference mesh lineage")
    return meta["lineage"].index(own)


# -- studies ---------------------------------------------------------------------

def _params(cfg: RunConfig) -> tuple:
    return (cfg.alpha, cfg.lambda_sq, cfg.T)


def build_cells(cfg: RunConfig, keep_final: bool = False) -> tuple:
    """Ladder cells for a convergence mode plus the varied parameter name."""
    T = cfg.spec().T
    if cfg.mode in ("conv-space",) or (cfg.mode == "reference" and len(cfg.levels) > 1):
        if len(cfg.taus) != 1:
            raise ConfigError("a mesh ladder takes exactly one tau")
        pairs, varied = [(lv, cfg.taus[0]) for lv in cfg.levels], "h"
    elif cfg.mode in ("conv-time", "reference"):
        if len(cfg.levels) != 1:
            raise ConfigError("a time ladder takes exactly one mesh level")
        pairs, varied = [(cfg.levels[0], t) for t in cfg.taus], "tau"
    elif cfg.mode == "conv-coupled":
        pairs, varied = list(zip(cfg.levels, cfg.taus)), "tau"
    elif cfg.mode == "run":
        pairs, varied = [(cfg.levels[0], cfg.taus[0])], "tau"
    else:
        raise ConfigError(f"mode {cfg.mode!r} has no ladder")
    cells = [Cell(i, cfg.problem, _params(cfg), cfg.family, cfg.n, lv, steps_for(T, t), cfg.solver, keep_final)
             for i, (lv, t) in enumerate(pairs)]
    for c in cells:
        check_desk_limits(c, cfg.paper_scale)
    return cells, varied


def convergence_study(cfg: RunConfig, workers: Optional[int] = None) -> list:
    """Rows of the convergence table for conv-space, conv-time or conv-coupled."""
    spec = cfg.spec()
    if spec.exact is None:
        if cfg.reference is None:
            raise ConfigError(f"problem {cfg.problem!r} has no exact solution; add a reference section")
        return reference_study(cfg, workers)
    cells, varied = build_cells(cfg)
    return finalize_rows(run_cells(cells, workers), varied, cfg.deterministic)


def cfl_rows(rows: list, eps: float = 0.5) -> list:
    """tau^4 / h^(1+eps) and h / tau^2 per row of a coupled ladder."""
    return [dict(level=r["level"], h=r["h"], tau=r["tau"], h_over_tau_sq=r["h"] / r["tau"] ** 2,
                 cfl_ratio=r["tau"] ** 4 / r["h"] ** (1 + eps), energy_cfl=r["tau"] / r["h"] ** 2)
            for r in rows]


def _reference_cell(cfg: RunConfig, varied: str) -> Cell:
    ref = cfg.reference or ReferenceConfig(kind="time" if varied == "tau" else "space")
    T = cfg.spec().T
    if varied == "tau":
        if ref.kind != "time":
            raise ConfigError("a time ladder needs a time reference")
        tau_ref = min(cfg.taus) / 2 ** ref.refine
        return Cell(-1, cfg.problem, _params(cfg), cfg.family, cfg.n, cfg.levels[0],
                    steps_for(T, tau_ref), cfg.solver, True)
    if ref.kind != "space":
        raise ConfigError("a mesh ladder needs a space reference")
    level = ref.level if ref.level is not None else max(cfg.levels) + 1
    if level <= max(cfg.levels):
        raise ConfigError("reference level must exceed every ladder level")
    return Cell(-1, cfg.problem, _params(cfg), cfg.family, cfg.n, level,
                steps_for(T, cfg.taus[0]), cfg.solver, True)


def reference_meta(cfg: RunConfig, cell: Cell) -> dict:
    spec = cfg.spec()
    return dict(problem=cfg.problem, alpha=spec.alpha, lambda_sq=spec.lambda_sq, T=spec.T,
                family=cell.family, n=cell.n, level=cell.level, num_steps=cell.num_steps,
                tau=spec.T / cell.num_steps, lineage=lineage_hashes(cell.family, cell.n, cell.level))


def obtain_reference(cfg: RunConfig, varied: str, out_dir: Optional[Path] = None):
    """Load a stored reference when configured, else compute and store one."""
    cell = _reference_cell(cfg, varied)
    meta = reference_meta(cfg, cell)
    ref = cfg.reference
    if ref is not None and ref.path and Path(ref.path).exists():
        values, stored = load_reference(ref.path)
        for key in ("problem", "alpha", "lambda_sq", "T"):
            if stored.get(key) != meta[key]:
                raise ConfigError(f"stored reference has {key} = {stored.get(key)!r}, expected {meta[key]!r}")
        return values, stored
    result = run_cell(cell)
    values = result["m_final"]
    if out_dir is not None:
        save_reference(Path(out_dir) / "reference.bin", values, meta)
    return values, meta


def reference_study(cfg: RunConfig, workers: Optional[int] = None, out_dir: Optional[Path] = None) -> list:
    """Final-time errors of a ladder against a fine reference solution."""
    cells, varied = build_cells(cfg, keep_final=True)
    ref_values, meta = obtain_reference(cfg, varied, out_dir)
    ref_chain = mesh_chain(meta["family"], meta["n"], meta["level"])
    ref_space = P1Space(ref_chain[-1])
    results = run_cells(cells, workers)
    for cell, res in zip(cells, results):
        start = check_lineage(meta, cell.family, cell.n, cell.level)
        cand = prolong_chain(res.pop("m_final"), ref_chain, start)
        res["err_L2_final"], res["err_H1_final"] = compare_fields(ref_space, ref_values, cand)
        # only final-time errors exist against a reference, even when an exact solution is known
        res["err_L2_max"] = res["err_H1_max"] = None
    return finalize_rows(results, varied, cfg.deterministic)


def single_run(cfg: RunConfig):
    """One trajectory; returns (step rows, summary)."""
    spec = cfg.spec()
    cells, _ = build_cells(cfg)
    cell = cells[0]
    mesh = build_mesh(cell.family, cell.n, cell.level)
    config = SimConfig.for_problem(spec, cell.num_steps, solver=cfg.solver, deterministic=cfg.deterministic)
    traj = run_simulation(spec, mesh, config)
    inv = check_invariants(traj)
    eta0, etan = eta_indicators(traj)
    steps = [asdict(r) for r in traj.records]
    summary = dict(problem=spec.name, h=mesh.h, tau=config.tau, num_steps=config.num_steps,
                   triangles=mesh.num_triangles, eta0=eta0, etan=etan, invariants=inv,
                   energy_final=traj.records[-1].energy)
    if spec.exact is not None:
        summary.update(err_L2_max=traj.max_error("l2"), err_H1_max=traj.max_error("h1"),
                       err_L2_final=traj.final_error("l2"), err_H1_final=traj.final_error("h1"))
    if not cfg.deterministic:
        summary["wall_time_s"] = traj.wall_time
    return steps, summary
