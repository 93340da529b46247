"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 convergence failure, 4 I/O error.
"""
import argparse
import csv
import math
import os
import sys

import numpy as np

from .config import load_config
from .errors import ConfigurationError, ConvergenceError, InversionError
from .gridio import GridFormatError, read_grid, write_grid
from .jrmq import build_grid, stage_violations
from .mcoracle import mc_barrier, mc_bermudan_lsmc, mc_corridor, mc_european
from .pricing import (
    BarrierSpec,
    CorridorSpec,
    ExerciseSchedule,
    VanillaSpec,
    barrier_price,
    bermudan_price,
    corridor_swap_interpolated,
    corridor_swap_left_endpoint,
    european_price,
    implied_vol,
)

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4
COLUMNS = ["instrument", "parameter", "grid_price", "mc_price", "mc_stderr", "implied_vol"]


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


def _build(cfg):
    g = cfg.grid
    return build_grid(cfg.model_spec(), g.K, g.n_x, g.n_y, g.joint_method, g.x_boundary,
                      g.y_boundary, cfg.newton.settings())


def _check_grid_matches(cfg, grid):
    g = cfg.grid
    if grid.K != g.K or grid.model.preset.to_dict() != cfg.model.params().to_dict():
        raise ConfigurationError("grid file does not match the configured model and step count")


def _vanilla(inst, strike):
    return VanillaSpec(inst.kind, strike, inst.discount_rate, inst.convention)


def _iv(inst, cfg, price, strike):
    if inst.implied_vol is None:
        return None
    T = cfg.model.T
    r = inst.discount_rate
    forward = cfg.model.y0 if inst.convention == "forward" else cfg.model.y0 * math.exp(r * T)
    try:
        return implied_vol(price, forward, strike, T, math.exp(-r * T), inst.implied_vol, inst.kind)
    except InversionError:
        return None


def price_instrument(inst, grid, cfg, mc):
    """Rows for one instrument; ``mc`` is an MCConfig or None."""
    K = grid.K
    spec = grid.model
    rows = []
    for p in inst.sweep():
        mc_est = None
        if inst.type in ("european", "bermudan"):
            v = _vanilla(inst, p)
            if inst.type == "european":
                price = european_price(grid, v)
                if mc is not None:
                    mc_est = mc_european(spec, mc, v)
            else:
                sched = ExerciseSchedule.every(inst.exercise_every, K)
                price = bermudan_price(grid, v, sched)
                if mc is not None:
                    mc_est = mc_bermudan_lsmc(spec, mc, v, sched, cfg.mc.basis_degree, grid_K=K)
            iv = _iv(inst, cfg, price, p)
        elif inst.type == "barrier":
            v = _vanilla(inst, inst.strike)
            bar = BarrierSpec(p, ExerciseSchedule.every(inst.monitor_every, K))
            price = barrier_price(grid, v, bar)
            if mc is not None:
                mc_est = mc_barrier(spec, mc, v, bar, grid_K=K)
            iv = None
        else:
            cor = CorridorSpec.from_spread(inst.reference_price, p, inst.discount_rate)
            fn = corridor_swap_left_endpoint if inst.type == "corridor_left" else corridor_swap_interpolated
            price = fn(grid, cor, inst.convention)
            if mc is not None:
                mc_est = mc_corridor(spec, mc, cor, inst.convention)
            iv = None
        rows.append([inst.name, p, price, mc_est and mc_est.value, mc_est and mc_est.stderr, iv])
    return rows


def write_table(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _price_all(cfg, grid, out_dir, use_mc, seed):
    _check_grid_matches(cfg, grid)
    mc = cfg.mc.config(seed) if use_mc else None
    out_dir = out_dir or cfg.output.results or "."
    os.makedirs(out_dir, exist_ok=True)
    for inst in cfg.instruments:
        rows = price_instrument(inst, grid, cfg, mc)
        path = os.path.join(out_dir, f"{inst.name}.csv")
        write_table(rows, path)
        print(f"wrote {path} ({len(rows)} rows)")


def cmd_build_grid(args):
    cfg = load_config(args.config)
    path = args.grid or cfg.output.grid
    if not path:
        raise ConfigurationError("no grid output path: pass --grid or set output.grid")
    grid = _build(cfg)
    _ensure_parent(path)
    write_grid(grid, path)
    print(f"wrote {path} ({len(grid.stages)} stages)")
    return EXIT_OK


def cmd_price(args):
    cfg = load_config(args.config)
    path = args.grid or cfg.output.grid
    if not path:
        raise ConfigurationError("no grid file: pass --grid or set output.grid")
    grid = read_grid(path)
    use_mc = cfg.mc.enabled and not args.no_mc
    _price_all(cfg, grid, args.out, use_mc, args.seed)
    return EXIT_OK


def cmd_compare_mc(args):
    cfg = load_config(args.config)
    path = args.grid or cfg.output.grid
    grid = read_grid(path) if path and os.path.exists(path) else _build(cfg)
    _price_all(cfg, grid, args.out, True, args.seed)
    return EXIT_OK


def cmd_dump_grid(args):
    if not args.grid:
        raise ConfigurationError("dump-grid needs --grid")
    grid = read_grid(args.grid)
    lines = ["k,n_x,n_y,x_min,x_max,y_min,y_max,y_mean,absorbed_mass,invariants"]
    for st in grid.stages:
        xq, yq = st.x_quantizer, st.y_quantizer
        cw, pr = yq.augmented()
        bad = stage_violations(st)
        lines.append(",".join([
            str(st.time_index), str(len(xq)), str(len(yq)),
            _fmt(xq.codewords[0]), _fmt(xq.codewords[-1]), _fmt(yq.codewords[0]), _fmt(yq.codewords[-1]),
            _fmt(float(cw @ pr)), _fmt(yq.absorbed_mass), "ok" if not bad else "|".join(bad),
        ]))
    text = "\n".join(lines) + "\n"
    if args.out:
        _ensure_parent(args.out)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def make_parser():
    p = argparse.ArgumentParser(prog="svquant", description="Joint recursive marginal quantization grids and pricing.")
    sub = p.add_subparsers(dest="command", required=True)
    commands = {
        "build-grid": (cmd_build_grid, "build a grid from a config and write it to --grid"),
        "price": (cmd_price, "price the configured instruments off a grid file"),
        "compare-mc": (cmd_compare_mc, "price with grid and Monte Carlo side by side"),
        "dump-grid": (cmd_dump_grid, "print a per-stage summary of a grid file"),
    }
    for name, (fn, help_) in commands.items():
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        if name != "dump-grid":
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--grid", metavar="PATH")
        sp.add_argument("--out", metavar="PATH", help="results directory (file for dump-grid)")
        if name in ("price", "compare-mc"):
            sp.add_argument("--seed", type=int, metavar="N", help="override mc.seed")
        if name == "price":
            sp.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo columns")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (OSError, GridFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
