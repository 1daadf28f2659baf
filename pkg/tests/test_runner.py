import os

import numpy as np
import pytest

from ymflow import cli, runner
from ymflow.checkpoint import load_checkpoint
from ymflow.config import parse_config

BASE = """
grid.dims = 6 6 6
group = SU2
bc = neumann
mode = zds_recovered
initial.kind = smooth
initial.seed = 2
stepper.cfl = 0.2
observables.list = energy a_action sup_curvature small_time wilson residuals epsilon
observables.loops = rect 0.2 0.2 0.5 0 1 0.4 0.4
observables.eps = 0.001 0.002
observables.save_dt = 0.002
observables.t_first = 0.0005
"""


def _cfg(extra=""):
    return parse_config(BASE + extra)


def _csvs(d):
    return {f: open(os.path.join(d, f)).read() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


def test_run_is_deterministic(tmp_path):
    cfg = _cfg("stepper.t_end = 0.008")
    r1 = runner.run(cfg, str(tmp_path / "a"))
    r2 = runner.run(cfg, str(tmp_path / "b"))
    assert r1.ok and r2.ok, [v.line() for v in r1.verdicts]
    a, b = _csvs(tmp_path / "a"), _csvs(tmp_path / "b")
    assert a == b
    assert {"energy.csv", "a_action.csv", "sup_curvature.csv", "rho_half.csv",
            "wilson_0_re.csv", "epsilon_gap_0.csv"} <= set(a)
    fa = load_checkpoint(tmp_path / "a" / "final.ckpt").arrays
    fb = load_checkpoint(tmp_path / "b" / "final.ckpt").arrays
    assert all(np.array_equal(fa[k], fb[k]) for k in fa)


def test_resume_is_bit_identical(tmp_path):
    full = runner.run(_cfg("stepper.t_end = 0.008"), str(tmp_path / "full"))
    runner.run(_cfg("stepper.t_end = 0.004"), str(tmp_path / "part"))
    res = runner.resume(str(tmp_path / "part" / "final.ckpt"), 0.008, str(tmp_path / "res"))
    assert full.final_time == res.final_time == 0.008
    fa = load_checkpoint(tmp_path / "full" / "final.ckpt")
    fb = load_checkpoint(tmp_path / "res" / "final.ckpt")
    assert set(fa.arrays) == set(fb.arrays)
    assert all(np.array_equal(fa.arrays[k], fb.arrays[k]) for k in fa.arrays)
    assert fa.header["series"] == fb.header["series"]
    assert _csvs(tmp_path / "full") == _csvs(tmp_path / "res")


def test_resume_hash_check(tmp_path):
    runner.run(_cfg("stepper.t_end = 0.002"), str(tmp_path))
    ck = str(tmp_path / "final.ckpt")
    other = _cfg("stepper.t_end = 0.002\nstepper.reproject_every = 3")
    with pytest.raises(ValueError, match="hash"):
        runner.resume(ck, 0.004, config=other)
    with pytest.raises(ValueError, match="precedes"):
        runner.resume(ck, 0.001)
    assert cli.main(["resume", ck, "--until", "0.004", "--config", _write(tmp_path, other)]) == 2
    runner.resume(ck, 0.003, str(tmp_path / "forced"), other, force=True)


def _write(tmp_path, cfg_or_text, name="c.cfg"):
    from ymflow.config import emit_config
    text = cfg_or_text if isinstance(cfg_or_text, str) else emit_config(cfg_or_text)
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_periodic_checkpoints(tmp_path):
    runner.run(_cfg("stepper.t_end = 0.004\noutput.checkpoint_every = 2"), str(tmp_path))
    cks = sorted(f for f in os.listdir(tmp_path) if f.startswith("checkpoint_"))
    assert cks
    head = load_checkpoint(tmp_path / cks[0]).header
    assert head["field_kind"] == "zds_connection" and head["mode"] == "zds_recovered"


def test_initial_kinds():
    for kind in ("zero", "smooth", "pure_gauge", "ha_sample"):
        cfg = parse_config(f"initial.kind = {kind}\nmode = zds")
        space = runner.build_space(cfg)
        A = runner.initial_field(cfg, space)
        assert A.shape == space.cal.shape(1, 3) and np.all(np.isfinite(A))
    cfg = parse_config("initial.kind = u1_mode\ngroup = U1\ninitial.wave = 1 0 0")
    space = runner.build_space(cfg)
    A = runner.initial_field(cfg, space)
    assert np.max(np.abs(A)) > 0 and np.array_equal(A, space.cal.apply_mask(A, 1))
    cfg = parse_config("initial.kind = u1_mode\ngroup = U1\ninitial.wave = 1 2 0\n"
                       "grid.domain = torus\nbc = periodic")
    space = runner.build_space(cfg)
    A = runner.initial_field(cfg, space)
    assert np.max(np.abs(space.cal.codiff(A, 1))) <= 1e-12 and np.max(np.abs(A)) > 0


def test_parse_loops():
    loops = runner.parse_loops("rect 0.1 0.1 0.5 0 1 0.3 0.3; poly 0 0 0 0.5 0 0 0 0.5 0 0 0 0 delta=0.01", 0.1)
    assert len(loops) == 2 and loops[1].subdiv == 0.01 and loops[0].subdiv == 0.05
    with pytest.raises(ValueError):
        runner.parse_loops("poly 0 0 0 1", 0.1)
    with pytest.raises(ValueError):
        runner.parse_loops("circle 1", 0.1)


def test_save_times():
    cfg = _cfg("stepper.t_end = 0.01")
    st = runner.save_times(cfg, 0.0, 0.01)
    assert st == sorted(set(st)) and st[-1] == 0.01 and 0.002 in st and 0.0005 in st
    assert runner.save_times(cfg, 0.004, 0.01)[0] > 0.004


# ---------------------------------------------------------------- cli


def test_cli_run_and_report(tmp_path, capsys):
    path = _write(tmp_path, BASE + "stepper.t_end = 0.002\n")
    assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "PASS finite_field" in out and "PASS neumann_B" in out
    assert cli.main(["report", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 2
    assert "no series found" in capsys.readouterr().err


def test_cli_config_errors(tmp_path, capsys):
    path = _write(tmp_path, "group = SU2\ninitial.kind = u1_mode\nfoo = 1\n")
    assert cli.main(["run", path]) == 2
    err = capsys.readouterr().err
    assert "u1_mode requires group = U1" in err and "foo" in err


def test_cli_wilson_zero_field(tmp_path, capsys):
    path = _write(tmp_path, "stepper.t_end = 0.001\n")
    assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 0
    loops = tmp_path / "loops.txt"
    loops.write_text("rect 0.2 0.2 0.5 0 1 0.4 0.4\nrect 0.1 0.3 0.3 1 2 0.2 0.5\n")
    capsys.readouterr()
    assert cli.main(["wilson", str(tmp_path / "o" / "final.ckpt"), "--loops", str(loops)]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "loop,re,im"
    assert [float(r.split(",")[1]) for r in rows[1:]] == [2.0, 2.0]


def test_cli_compare_oracle(tmp_path, capsys):
    text = """
grid.dims = 8 8 8
grid.domain = torus
bc = periodic
group = U1
mode = direct
initial.kind = u1_mode
initial.wave = 1 1 0
stepper.t_end = 0.01
observables.save_dt = 0.0025
oracle.tol = 1e-4
"""
    assert cli.main(["compare-oracle", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "oracle_error.csv").read_text().splitlines()
    assert rows[0] == "t,value" and len(rows) == 5
    assert "PASS oracle_rel_l2" in capsys.readouterr().out


def test_u1_mode_oracle_in_run(tmp_path):
    cfg = parse_config("""
group = U1
mode = zds
initial.kind = u1_mode
initial.wave = 1 2 0
stepper.t_end = 0.01
observables.list = energy oracle
oracle.tol = 1e-4
""")
    rep = runner.run(cfg, str(tmp_path))
    assert rep.ok, [v.line() for v in rep.verdicts]


def test_cli_variational(tmp_path, capsys):
    path = _write(tmp_path, "mode = direct\ninitial.kind = smooth\nstepper.t_end = 0.002\n")
    for spec in ("smooth:seed=1,amplitude=0.5", "vertical:seed=2", "zero"):
        assert cli.main(["variational", path, "--v0", spec, "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "vertical_residual.csv").exists()
    assert cli.main(["variational", path, "--v0", "bogus"]) == 2
    zds = _write(tmp_path, "mode = zds\n", "z.cfg")
    assert cli.main(["variational", zds, "--v0", "zero"]) == 2
