"""Text serialization of quantization grids.

Layout::

    #format: jrmq-grid/1
    #meta: {...json...}
    [joint]
    k,i,u,x_codeword,y_codeword,joint_probability
    ...
    [absorbed]
    [x_quantizer]
    [y_quantizer]
    [x_transition]
    [y_transition]

Floats are written with ``repr`` so a read-back grid is bit-identical. The
model is stored by its preset parameters and rebuilt on load.
"""
import json
from dataclasses import asdict

import numpy as np

from .errors import ConfigurationError
from .jrmq import JointProbMethod, JointStage, QuantizationGrid
from .model import PresetParams, preset
from .rmq1d import BoundaryMode, NewtonSettings, Quantizer1D

FORMAT_TAG = "jrmq-grid/1"

_HEADERS = {
    "joint": "k,i,u,x_codeword,y_codeword,joint_probability",
    "absorbed": "k,i,absorbed_probability",
    "x_quantizer": "k,i,codeword,probability,absorbed_mass",
    "y_quantizer": "k,u,codeword,probability,absorbed_mass",
    "x_transition": "k,i,j,probability",
    "y_transition": "k,u,v,probability",
}


class GridFormatError(ValueError):
    """A grid file is malformed or has an unknown format tag."""


def _f(v):
    return repr(float(v))


def grid_metadata(grid):
    if grid.model.preset is None:
        raise ConfigurationError("only grids built from a preset model can be serialized")
    return {
        "model": grid.model.preset.to_dict(),
        "K": grid.K,
        "n_x": len(grid.stages[-1].x_quantizer),
        "n_y": len(grid.stages[-1].y_quantizer),
        "dt": grid.dt,
        "method": JointProbMethod(grid.method).value,
        "x_mode": BoundaryMode(grid.x_mode).value,
        "y_mode": BoundaryMode(grid.y_mode).value,
        "settings": asdict(grid.settings),
    }


def dumps_grid(grid):
    meta = grid_metadata(grid)
    lines = [f"#format: {FORMAT_TAG}", "#meta: " + json.dumps(meta, sort_keys=True)]
    sections = {name: [] for name in _HEADERS}
    for k, st in enumerate(grid.stages):
        xq, yq = st.x_quantizer, st.y_quantizer
        xs = [_f(v) for v in xq.codewords]
        ys = [_f(v) for v in yq.codewords]
        for i in range(len(xq)):
            row = st.joint[i]
            sections["joint"].extend(f"{k},{i},{u},{xs[i]},{ys[u]},{_f(row[u])}" for u in range(len(yq)))
            sections["absorbed"].append(f"{k},{i},{_f(st.absorbed[i])}")
            sections["x_quantizer"].append(f"{k},{i},{xs[i]},{_f(xq.probabilities[i])},{_f(xq.absorbed_mass)}")
        for u in range(len(yq)):
            sections["y_quantizer"].append(f"{k},{u},{ys[u]},{_f(yq.probabilities[u])},{_f(yq.absorbed_mass)}")
        for name, mat in (("x_transition", st.x_transition), ("y_transition", st.y_transition)):
            if mat is None:
                continue
            for a in range(mat.shape[0]):
                sections[name].extend(f"{k},{a},{b},{_f(mat[a, b])}" for b in range(mat.shape[1]))
    for name, header in _HEADERS.items():
        lines.append(f"[{name}]")
        lines.append(header)
        lines.extend(sections[name])
    return "\n".join(lines) + "\n"


def write_grid(grid, path):
    text = dumps_grid(grid)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse(text):
    lines = text.splitlines()
    if len(lines) < 2 or lines[0].strip() != f"#format: {FORMAT_TAG}":
        raise GridFormatError(f"missing or unsupported format tag (expected {FORMAT_TAG})")
    if not lines[1].startswith("#meta: "):
        raise GridFormatError("missing #meta line")
    try:
        meta = json.loads(lines[1][len("#meta: "):])
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"bad metadata: {exc}") from exc
    sections, current = {}, None
    for n, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in _HEADERS:
                raise GridFormatError(f"line {n}: unknown section {current!r}")
            sections[current] = []
            continue
        if current is None:
            raise GridFormatError(f"line {n}: data outside a section")
        if not sections[current] and line == _HEADERS[current]:
            sections[current].append(None)  # header marker
            continue
        sections[current].append(line.split(","))
    for name in _HEADERS:
        rows = sections.get(name)
        if rows is None or not rows or rows[0] is not None:
            raise GridFormatError(f"section [{name}] missing or without header")
        sections[name] = rows[1:]
    return meta, sections


def _stage_arrays(rows, ncols):
    out = {}
    for r in rows:
        if len(r) != ncols:
            raise GridFormatError(f"expected {ncols} fields, got {len(r)}: {','.join(r)}")
        out.setdefault(int(r[0]), []).append(r[1:])
    return out


def _matrix(rows, n_rows, n_cols):
    mat = np.zeros((n_rows, n_cols))
    for r in rows:
        mat[int(r[0]), int(r[1])] = float(r[2])
    return mat


def loads_grid(text):
    meta, sec = _parse(text)
    try:
        spec = preset(PresetParams.from_dict(meta["model"]))
        K = int(meta["K"])
        xq_rows = _stage_arrays(sec["x_quantizer"], 5)
        yq_rows = _stage_arrays(sec["y_quantizer"], 5)
        joint_rows = _stage_arrays(sec["joint"], 6)
        abs_rows = _stage_arrays(sec["absorbed"], 3)
        xt_rows = _stage_arrays(sec["x_transition"], 4)
        yt_rows = _stage_arrays(sec["y_transition"], 4)
        stages = []
        for k in range(K + 1):
            xr, yr = xq_rows[k], yq_rows[k]
            xq = Quantizer1D(k, np.array([float(r[1]) for r in xr]), np.array([float(r[2]) for r in xr]),
                             float(xr[0][3]))
            yq = Quantizer1D(k, np.array([float(r[1]) for r in yr]), np.array([float(r[2]) for r in yr]),
                             float(yr[0][3]))
            joint = np.zeros((len(xq), len(yq)))
            for r in joint_rows[k]:
                joint[int(r[0]), int(r[1])] = float(r[4])
            absorbed = np.zeros(len(xq))
            for r in abs_rows[k]:
                absorbed[int(r[0])] = float(r[1])
            x_tr = y_tr = None
            if k > 0:
                prev = stages[-1]
                x_tr = _matrix(xt_rows[k], len(prev.x_quantizer), len(xq))
                y_tr = _matrix(yt_rows[k], len(prev.y_quantizer), len(yq))
            stages.append(JointStage(xq, yq, joint, x_tr, y_tr, absorbed))
        settings = NewtonSettings(**meta["settings"])
        return QuantizationGrid(
            stages, float(meta["dt"]), spec, settings, JointProbMethod(meta["method"]),
            BoundaryMode(meta["x_mode"]), BoundaryMode(meta["y_mode"]),
        )
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        if isinstance(exc, (GridFormatError, ConfigurationError)):
            raise
        raise GridFormatError(f"inconsistent grid file: {exc!r}") from exc


def read_grid(path):
    with open(path, encoding="utf-8") as fh:
        return loads_grid(fh.read())
