import csv
import os
import subprocess
import sys

import pytest

from svquant.cli import COLUMNS, main

SMALL = """
[model]
name = "heston"
kappa = 2.0
theta = 0.09
sigma = 0.4
r = 0.05
rho = -0.3
x0 = 0.09
y0 = 100.0

[grid]
K = 4
n_x = 5
n_y = 8
x_boundary = "reflecting"

[mc]
paths = 2000
steps = 8
seed = 11

[[instruments]]
name = "puts"
type = "european"
kind = "put"
discount_rate = 0.05
strikes = {{ start = 90, stop = 110, step = 10 }}
implied_vol = "black"

[[instruments]]
name = "berm"
type = "bermudan"
kind = "put"
discount_rate = 0.05
strikes = [100.0]
exercise_every = 2

[[instruments]]
name = "uo"
type = "barrier"
kind = "put"
discount_rate = 0.05
strike = 100.0
barrier_levels = [110.0, 130.0]
monitor_every = 1

[[instruments]]
name = "cor"
type = "corridor_interpolated"
reference_price = 100.0
spreads = [0.1]

[output]
grid = "{grid}"
results = "{results}"
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL.format(grid=tmp_path / "g.grid", results=tmp_path / "res"))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_build_price_dump(config, tmp_path, capsys):
    assert main(["build-grid", "--config", str(config)]) == 0
    assert (tmp_path / "g.grid").exists()
    assert main(["price", "--config", str(config)]) == 0
    rows = _rows(tmp_path / "res" / "puts.csv")
    assert rows[0] == COLUMNS
    assert [r[1] for r in rows[1:]] == ["90", "100", "110"]
    assert all(r[3] and r[4] and r[5] for r in rows[1:])
    assert len(_rows(tmp_path / "res" / "uo.csv")) == 3
    assert main(["price", "--config", str(config), "--no-mc", "--out", str(tmp_path / "nomc")]) == 0
    nomc = _rows(tmp_path / "nomc" / "berm.csv")
    assert nomc[1][3] == "" and nomc[1][2] == _rows(tmp_path / "res" / "berm.csv")[1][2]
    capsys.readouterr()
    assert main(["dump-grid", "--grid", str(tmp_path / "g.grid")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(l.endswith(",ok") for l in lines[1:])


def test_seed_override_changes_mc_only(config, tmp_path):
    main(["build-grid", "--config", str(config)])
    main(["price", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["price", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "12"])
    a, b = _rows(tmp_path / "a" / "puts.csv"), _rows(tmp_path / "b" / "puts.csv")
    assert [r[2] for r in a] == [r[2] for r in b]
    assert [r[3] for r in a[1:]] != [r[3] for r in b[1:]]


def test_exit_codes(tmp_path, config):
    bad = tmp_path / "bad.toml"
    bad.write_text(config.read_text().replace('name = "heston"', 'name = "heston"\nfoo = 1'))
    assert main(["build-grid", "--config", str(bad)]) == 2
    bad.write_text("[model\n")
    assert main(["build-grid", "--config", str(bad)]) == 2
    assert main(["price", "--config", str(config), "--grid", str(tmp_path / "missing.grid")]) == 4
    junk = tmp_path / "junk.grid"
    junk.write_text("hello\n")
    assert main(["dump-grid", "--grid", str(junk)]) == 4
    exact = tmp_path / "exact.toml"
    exact.write_text(config.read_text().replace('x_boundary = "reflecting"', 'joint_method = "exact_bivariate"\nx_boundary = "reflecting"'))
    assert main(["build-grid", "--config", str(exact)]) == 2


def test_convergence_exit_code(config, tmp_path):
    text = config.read_text().replace("[output]", "[newton]\nmax_iterations = 1\n\n[output]")
    cfg = tmp_path / "tight.toml"
    cfg.write_text(text)
    assert main(["build-grid", "--config", str(cfg)]) == 3


def test_grid_config_mismatch(config, tmp_path):
    main(["build-grid", "--config", str(config)])
    other = tmp_path / "other.toml"
    other.write_text(config.read_text().replace("K = 4", "K = 2"))
    assert main(["price", "--config", str(other), "--grid", str(tmp_path / "g.grid")]) == 2


def _run(args, cwd, threads):
    env = dict(os.environ)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = str(threads)
    subprocess.run([sys.executable, "-m", "svquant", *args], cwd=cwd, env=env, check=True,
                   capture_output=True)


@pytest.mark.parametrize("threads", [1, 4])
def test_runs_are_byte_identical_across_thread_counts(config, tmp_path, threads):
    ref_dir = tmp_path / "ref"
    ref_dir.mkdir()
    _run(["build-grid", "--config", str(config), "--grid", str(ref_dir / "g.grid")], tmp_path, 2)
    _run(["price", "--config", str(config), "--grid", str(ref_dir / "g.grid"), "--out", str(ref_dir)], tmp_path, 2)
    out = tmp_path / f"t{threads}"
    out.mkdir()
    _run(["build-grid", "--config", str(config), "--grid", str(out / "g.grid")], tmp_path, threads)
    _run(["price", "--config", str(config), "--grid", str(out / "g.grid"), "--out", str(out)], tmp_path, threads)
    for name in ("g.grid", "puts.csv", "berm.csv", "uo.csv", "cor.csv"):
        assert (out / name).read_bytes() == (ref_dir / name).read_bytes()
