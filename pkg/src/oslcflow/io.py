"""Plain-text CSV bundles for flows and scalar fields.

A bundle is a directory holding ``manifest.json`` and one CSV per stored
time pair (flows) or stored time (scalar fields). Each CSV starts with a
header line, one metadata line (vectors joined by ``;``), a column line,
then one row per node in row-major order. Numbers use 17 significant digits
so files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .flow import FlowMap
from .grid import ScalarField, SpaceTimeGrid

FMT = "{:.17g}"


def fmt(v) -> str:
    return FMT.format(float(v))


def _grid_dict(g: SpaceTimeGrid) -> dict:
    return {"box": [list(b) for b in g.box], "nx": list(g.nx), "t0": g.t0, "T": g.T,
            "nt": g.nt, "padding": g.padding}


def grid_from_dict(d: dict) -> SpaceTimeGrid:
    return SpaceTimeGrid(box=tuple(tuple(b) for b in d["box"]), nx=tuple(d["nx"]),
                         t0=float(d.get("t0", 0.0)), T=float(d.get("T", 1.0)),
                         nt=int(d.get("nt", 101)), padding=float(d.get("padding", 0.0)))


def _box_str(g):
    return ";".join(fmt(v) for b in g.box for v in b)


def _nx_str(g):
    return ";".join(str(n) for n in g.nx)


def write_manifest(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def write_flow_bundle(flow: FlowMap, directory, pairs=None, diagnostics: dict | None = None) -> Path:
    """Write the stored pairs of ``flow`` (all of them unless ``pairs`` is given)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = flow.grid
    keys = sorted(flow.samples) if pairs is None else sorted(pairs)
    files = []
    N = g.dim
    for s, t in keys:
        name = f"pair_s{s:04d}_t{t:04d}.csv"
        X = flow.samples[(s, t)].reshape(-1, N)
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "box", "nx"])
            w.writerow([fmt(g.times[s]), fmt(g.times[t]), _box_str(g), _nx_str(g)])
            w.writerow(["node"] + [f"X{i + 1}" for i in range(N)])
            for i, row in enumerate(X):
                w.writerow([i] + [fmt(v) for v in row])
        files.append({"file": name, "s_index": s, "t_index": t})
    write_manifest(d / "manifest.json", {
        "kind": "flow", "direction": flow.direction, "eps_used": flow.eps_used,
        "grid": _grid_dict(g), "files": files, "diagnostics": diagnostics or {}})
    return d


def read_flow_bundle(directory) -> FlowMap:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    g = grid_from_dict(man["grid"])
    samples = {}
    for entry in man["files"]:
        rows = _read_rows(d / entry["file"])
        samples[(entry["s_index"], entry["t_index"])] = rows[:, 1:].reshape(g.nx + (g.dim,))
    return FlowMap(g, man["direction"], samples, float(man["eps_used"]))


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r] for r in rows[3:] if r])


def write_scalar_bundle(field_: ScalarField, directory, times=None) -> Path:
    """Write a scalar field (every stored time unless ``times`` gives indices)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = field_.grid
    idx = range(len(field_.times)) if times is None else sorted(times)
    files = []
    for k in idx:
        name = f"time_{k:04d}.csv"
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "box", "nx"])
            w.writerow([fmt(field_.times[k]), _box_str(g), _nx_str(g)])
            w.writerow(["node", "value"])
            for i, v in enumerate(field_.values[k].ravel()):
                w.writerow([i, fmt(v)])
        files.append({"file": name, "t": float(field_.times[k])})
    write_manifest(d / "manifest.json", {"kind": "scalar", "role": field_.role,
                                         "grid": _grid_dict(g), "files": files})
    return d


def read_scalar_bundle(directory) -> ScalarField:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    g = grid_from_dict(man["grid"])
    times, vals = [], []
    for entry in man["files"]:
        rows = _read_rows(d / entry["file"])
        times.append(entry["t"])
        vals.append(rows[:, 1].reshape(g.nx))
    return ScalarField(g, np.array(times), np.stack(vals), man["role"])


def write_table(path, header: list[str], rows) -> Path:
    """CSV with a header; floats at 17 significant digits, other cells verbatim."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path
