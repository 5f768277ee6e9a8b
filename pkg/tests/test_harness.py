import csv
import io
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from llg_bdf2 import cli, harness
from llg_bdf2.fem import P1Space
from llg_bdf2.harness import (
    TABLE_FIELDS,
    Cell,
    ConfigError,
    ReferenceConfig,
    RunConfig,
    add_rates,
    build_cells,
    check_lineage,
    compare_fields,
    convergence_study,
    lineage_hashes,
    load_config,
    load_reference,
    loglog_svg,
    mesh_chain,
    prolong_chain,
    read_table,
    run_cell,
    save_reference,
    steps_for,
    table_csv,
    table_svg,
    worker_count,
)
from llg_bdf2.integrator import InvariantViolation
from llg_bdf2.mesh import MeshError
from llg_bdf2.sparse import SolverError

SVG = "{http://www.w3.org/2000/svg}"


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# -- configuration ---------------------------------------------------------------

def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="tua"):
        load_config(_write(tmp_path, "c.json", {"problem": "cubic", "tua": 0.1}))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "c.json", {"reference": {"kind": "time", "oops": 1}}))


@pytest.mark.parametrize("data", [
    {"mode": "conv-space", "levels": [0]},
    {"mode": "conv-time", "taus": [0.1]},
    {"mode": "conv-coupled", "levels": [0, 1], "taus": [0.1]},
    {"alpha": -1.0},
    {"taus": [0.0]},
    {"n": 0},
    {"mode": "fly"},
    {"family": "hex"},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        RunConfig(**data)


def test_unknown_problem_rejected():
    with pytest.raises(KeyError):
        RunConfig(problem="nope")


def test_overrides_apply(tmp_path):
    cfg = load_config(_write(tmp_path, "c.json", {"problem": "cubic", "out": "a"}), out="b", mode="run")
    assert cfg.out == "b" and cfg.mode == "run"
    assert cfg.spec().alpha == 0.2
    cfg = RunConfig(problem="cubic", alpha=0.5)
    assert cfg.spec().alpha == 0.5


def test_steps_for():
    assert steps_for(0.2, 1e-3) == 200
    assert steps_for(1.0, 1 / 160) == 160
    with pytest.raises(ConfigError):
        steps_for(0.2, 0.03)


def test_desk_limits():
    with pytest.raises(ConfigError, match="paper-scale"):
        build_cells(RunConfig(mode="conv-space", n=64, levels=[0, 1], taus=[0.1]))
    with pytest.raises(ConfigError, match="paper-scale"):
        build_cells(RunConfig(mode="run", T=1.0, taus=[1e-4]))
    cells, _ = build_cells(RunConfig(mode="conv-space", n=64, levels=[0, 1], taus=[0.1], paper_scale=True))
    assert [c.n * 2 ** c.level for c in cells] == [64, 128]
    # the largest desk mesh is allowed
    build_cells(RunConfig(mode="run", n=64, levels=[0], taus=[0.1]))


def test_worker_count(monkeypatch):
    monkeypatch.setenv("LLG_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("LLG_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("LLG_THREADS", "many")
    assert worker_count() >= 1


def test_build_cells_ladders():
    cells, varied = build_cells(RunConfig(mode="conv-time", n=4, levels=[1], taus=[0.1, 0.05], T=0.2))
    assert varied == "tau" and [c.num_steps for c in cells] == [2, 4]
    assert {c.level for c in cells} == {1}
    cells, varied = build_cells(RunConfig(mode="conv-coupled", n=2, levels=[0, 2], taus=[0.1, 0.05], T=0.2))
    assert varied == "tau" and [(c.level, c.num_steps) for c in cells] == [(0, 2), (2, 4)]
    with pytest.raises(ConfigError):
        build_cells(RunConfig(mode="conv-space", levels=[0, 1], taus=[0.1, 0.05]))


# -- CSV -------------------------------------------------------------------------

def test_empty_table_is_header_only():
    text = table_csv([])
    assert text == ",".join(TABLE_FIELDS) + "\r\n"


def test_csv_format_and_round_trip(tmp_path):
    rows = [dict(level=0, h=0.1, tau=1 / 3, err_H1_max=1e-3, err_L2_max=2e-4),
            dict(level=1, h=0.05, tau=1 / 3, err_H1_max=4.9e-4, err_L2_max=5.1e-5)]
    add_rates(rows, "h")
    text = table_csv(rows)
    assert text.count("\r\n") == 3 and "\n" not in text.replace("\r\n", "")
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert parsed[0]["tau"] == repr(1 / 3) and float(parsed[0]["tau"]) == 1 / 3
    assert parsed[0]["rate_H1"] == "" and parsed[0]["wall_time_s"] == ""
    p = tmp_path / "t.csv"
    harness.write_table(p, rows)
    back = read_table(p)
    assert back[1]["rate_H1"] == rows[1]["rate_H1"]
    assert back[1]["h"] == 0.05 and back[0]["level"] == 0


def test_rates_recomputable_from_error_columns():
    rows = [dict(level=i, h=2.0 ** -i, tau=0.1, err_L2_max=3 * 4.0 ** -i, err_H1_max=2.0 ** -i * 1.1 ** i)
            for i in range(4)]
    add_rates(rows, "h")
    for a, b in zip(rows, rows[1:]):
        assert b["rate_L2"] == pytest.approx(math.log2(a["err_L2_max"] / b["err_L2_max"]), rel=1e-14)
        assert b["rate_H1"] == pytest.approx(math.log2(a["err_H1_max"] / b["err_H1_max"]), rel=1e-14)
    assert rows[0]["rate_L2"] is None


def test_rates_blank_for_zero_errors():
    rows = [dict(level=i, h=0.5, tau=0.1 / 2 ** i, err_L2_max=0.0, err_H1_max=0.0) for i in range(3)]
    add_rates(rows, "tau")
    assert all(r["rate_L2"] is None and r["rate_H1"] is None for r in rows)
    assert ",,,," in table_csv(rows)


# -- SVG -------------------------------------------------------------------------

def test_svg_well_formed_one_polyline_per_series():
    series = {"a": [(0.1, 1e-2), (0.05, 5e-3)], "b": [(0.1, 1e-3), (0.05, 2.5e-4)], "c": [(0.1, 1.0)]}
    root = ET.fromstring(loglog_svg(series, "h"))
    assert root.tag == SVG + "svg"
    assert len(root.findall(SVG + "polyline")) == 3
    assert len([p for p in root.findall(SVG + "polygon") if p.get("class") == "slope"]) == 2


def test_table_svg_uses_both_error_curves():
    rows = [dict(h=0.5 / 2 ** i, tau=0.01, err_L2_max=0.1 / 4 ** i, err_H1_max=0.2 / 2 ** i) for i in range(3)]
    root = ET.fromstring(table_svg(rows, "h", title="a < b & c"))
    assert len(root.findall(SVG + "polyline")) == 2
    # empty data still yields a valid document
    ET.fromstring(loglog_svg({}, "tau"))


# -- convergence studies --------------------------------------------------------------

def test_stationary_time_ladder_has_zero_errors_and_blank_rates():
    cfg = RunConfig(mode="conv-time", problem="constant", n=2, levels=[0], taus=[0.1, 0.05], deterministic=True)
    rows = convergence_study(cfg, workers=1)
    for r in rows:
        assert r["err_H1_max"] <= 1e-14 and r["err_L2_final"] <= 1e-14
        assert r["rate_L2"] is None and r["rate_H1"] is None
        assert r["wall_time_s"] is None


def test_missing_exact_without_reference_is_error():
    cfg = RunConfig(mode="conv-space", problem="pulse", n=2, levels=[0, 1], taus=[0.25])
    with pytest.raises(ConfigError, match="reference"):
        convergence_study(cfg, workers=1)


def test_coupled_rows_equal_single_runs():
    cfg = RunConfig(mode="conv-coupled", problem="cubic", n=2, levels=[0, 1], taus=[0.05, 0.025],
                    deterministic=True)
    rows = convergence_study(cfg, workers=1)
    for row, (lv, tau) in zip(rows, [(0, 0.05), (1, 0.025)]):
        single = RunConfig(mode="run", problem="cubic", n=2, levels=[lv], taus=[tau], deterministic=True)
        _, summary = harness.single_run(single)
        for key in ("err_H1_max", "err_L2_final", "energy_final", "eta0", "etan"):
            assert row[key] == summary[key]


def test_start_level_does_not_change_later_rows():
    base = dict(mode="conv-space", problem="cubic", n=2, taus=[0.05], deterministic=True)
    full = convergence_study(RunConfig(levels=[0, 1, 2], **base), workers=1)
    short = convergence_study(RunConfig(levels=[1, 2], **base), workers=1)
    for a, b in zip(full[1:], short):
        for key in ("h", "err_L2_max", "err_H1_max", "err_H1_final", "energy_final"):
            assert a[key] == b[key]
    assert full[2]["rate_H1"] == short[1]["rate_H1"]


def test_pool_matches_serial():
    cfg = RunConfig(mode="conv-time", problem="cubic", n=2, levels=[0], taus=[0.1, 0.05], deterministic=True)
    cells, _ = build_cells(cfg)
    serial = [run_cell(c) for c in cells]
    pooled = harness.run_cells(cells, workers=2)
    for a, b in zip(serial, pooled):
        assert a["err_H1_max"] == b["err_H1_max"] and a["level"] == b["level"]


def test_deterministic_rerun_reproduces_row():
    cfg = RunConfig(mode="conv-time", problem="cubic", n=2, levels=[0], taus=[0.1, 0.05], deterministic=True)
    assert table_csv(convergence_study(cfg, workers=1)) == table_csv(convergence_study(cfg, workers=1))


# -- references ------------------------------------------------------------------

def test_reference_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(13, 3))
    meta = dict(problem="pulse", lineage=lineage_hashes("crisscross", 2, 0))
    save_reference(tmp_path / "r.bin", vals, meta)
    raw = (tmp_path / "r.bin").read_bytes()
    assert raw[:8] == b"LLGREF\x00\x00"
    assert int.from_bytes(raw[8:12], "little") == 1
    assert int.from_bytes(raw[12:20], "little") == 13
    assert len(raw) == 20 + 13 * 24
    back, meta2 = load_reference(tmp_path / "r.bin")
    assert np.array_equal(back, vals) and meta2 == meta
    (tmp_path / "bad.bin").write_bytes(b"NOTREF\x00\x00" + raw[8:])
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ValueError):
        load_reference(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    (tmp_path / "short.json").write_text("{}")
    with pytest.raises(ValueError):
        load_reference(tmp_path / "short.bin")


def test_reference_against_itself_is_zero():
    space = P1Space(mesh_chain("crisscross", 2, 1)[-1])
    vals = np.random.default_rng(1).normal(size=(space.n, 3))
    assert compare_fields(space, vals, vals) == (0.0, 0.0)


@pytest.mark.parametrize("family", ["crisscross", "diagonal"])
def test_coarsened_then_prolonged_reference(family):
    chain = mesh_chain(family, 2, 2)
    coarse_vals = np.random.default_rng(2).normal(size=(chain[0].num_vertices, 3))
    ref = prolong_chain(coarse_vals, chain, 0)
    # coarsen by nodal restriction onto the coarse vertices
    where = {tuple(np.round(p, 12)): i for i, p in enumerate(chain[-1].vertices)}
    restricted = ref[[where[tuple(np.round(p, 12))] for p in chain[0].vertices]]
    cand = prolong_chain(restricted, chain, 0)
    l2, h1 = compare_fields(P1Space(chain[-1]), ref, cand)
    assert l2 <= 1e-14 and h1 <= 1e-13


def test_lineage_mismatch_rejected():
    meta = dict(lineage=lineage_hashes("crisscross", 2, 2))
    assert check_lineage(meta, "crisscross", 2, 1) == 1
    assert check_lineage(meta, "crisscross", 4, 1) == 2
    with pytest.raises(MeshError):
        check_lineage(meta, "crisscross", 3, 0)
    with pytest.raises(MeshError):
        check_lineage(meta, "diagonal", 2, 0)


def test_pulse_time_reference_workflow(tmp_path):
    cfg = RunConfig(mode="reference", problem="pulse", n=2, levels=[0], taus=[1 / 128, 1 / 256],
                    reference=ReferenceConfig(kind="time", refine=2), deterministic=True)
    rows = harness.reference_study(cfg, workers=1, out_dir=tmp_path)
    assert (tmp_path / "reference.bin").exists() and (tmp_path / "reference.json").exists()
    vals, meta = load_reference(tmp_path / "reference.bin")
    assert meta["num_steps"] == 1024 and vals.shape == (13, 3)
    assert rows[1]["err_H1_final"] < rows[0]["err_H1_final"]
    assert rows[1]["rate_H1"] >= 1.0
    assert rows[0]["err_H1_max"] is None
    # a stored reference is reused verbatim
    cfg.reference.path = str(tmp_path / "reference.bin")
    again = harness.reference_study(cfg, workers=1)
    assert table_csv(again) == table_csv(rows)
    cfg2 = RunConfig(mode="reference", problem="pulse", alpha=0.5, n=2, levels=[0], taus=[1 / 128, 1 / 256],
                     reference=ReferenceConfig(kind="time", refine=2, path=str(tmp_path / "reference.bin")))
    with pytest.raises(ConfigError, match="alpha"):
        harness.reference_study(cfg2, workers=1)


def test_reference_study_reports_final_errors_only():
    # the cubic problem has an exact solution, but a reference table compares against the reference
    cfg = RunConfig(mode="reference", problem="cubic", n=2, levels=[0], taus=[0.05, 0.025],
                    reference=ReferenceConfig(kind="time", refine=2), deterministic=True)
    rows = harness.reference_study(cfg, workers=1)
    assert all(r["err_H1_max"] is None and r["err_L2_max"] is None for r in rows)
    expected = math.log(rows[0]["err_H1_final"] / rows[1]["err_H1_final"]) / math.log(2.0)
    assert rows[1]["rate_H1"] == pytest.approx(expected, rel=1e-14)


def test_space_reference_needs_finer_level():
    cfg = RunConfig(mode="reference", problem="pulse", n=2, levels=[0, 1], taus=[0.25],
                    reference=ReferenceConfig(kind="space", level=1))
    with pytest.raises(ConfigError):
        harness.reference_study(cfg, workers=1)
    cfg.reference = ReferenceConfig(kind="time")
    with pytest.raises(ConfigError):
        harness.reference_study(cfg, workers=1)


# -- CLI ---------------------------------------------------------------------------

def test_cli_run_and_exit_ok(tmp_path, capsys):
    p = _write(tmp_path, "c.json", {"problem": "cubic", "n": 2, "taus": [0.05]})
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(p), "--out", str(out), "--deterministic"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["num_steps"] == 4 and "wall_time_s" not in summary
    lines = (out / "steps.csv").read_bytes().decode().split("\r\n")
    assert len([l for l in lines if l]) == 6  # header, initial state, 4 steps


def test_cli_conv_byte_identical(tmp_path, capsys):
    p = _write(tmp_path, "c.json", {"problem": "cubic", "n": 2, "levels": [0, 1], "taus": [0.05], "plot": True})
    texts = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["conv-space", "--config", str(p), "--out", str(out), "--deterministic"]) == 0
        texts.append((out / "table.csv").read_bytes())
        ET.fromstring((out / "convergence.svg").read_text())
    assert texts[0] == texts[1]
    assert cli.main(["plot", "--config", str(p), "--out", str(tmp_path / "o0")]) == 0


def test_cli_coupled_writes_cfl(tmp_path, capsys):
    p = _write(tmp_path, "c.json", {"problem": "cubic", "n": 2, "levels": [0, 1], "taus": [0.05, 0.025]})
    out = tmp_path / "o"
    assert cli.main(["conv-coupled", "--config", str(p), "--out", str(out)]) == 0
    rows = read_table(out / "cfl.csv")
    assert rows[0]["cfl_ratio"] == pytest.approx(0.05 ** 4 / rows[0]["h"] ** 1.5)


def test_cli_config_errors(tmp_path, capsys):
    p = _write(tmp_path, "c.json", {"problem": "cubic", "bogus": 1})
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    p = _write(tmp_path, "d.json", {"problem": "pulse", "levels": [0, 1], "n": 2, "taus": [0.25]})
    assert cli.main(["conv-space", "--config", str(p), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("exc, code", [(InvariantViolation("identity"), 2), (SolverError("singular"), 3)])
def test_cli_failure_exit_codes(tmp_path, monkeypatch, exc, code, capsys):
    def boom(cfg):
        raise exc

    monkeypatch.setattr(harness, "single_run", boom)
    p = _write(tmp_path, "c.json", {"problem": "cubic", "n": 2, "taus": [0.05]})
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == code


def test_cli_verify_quick(tmp_path, capsys):
    p = _write(tmp_path, "c.json", {"problem": "cubic", "quick": True})
    assert cli.main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed and all(l.startswith("PASS ") for l in printed)
    assert (tmp_path / "verify.csv").exists()
