"""Planted ground-truth models and file formats.

Every format is plain text. Floats are written with 17 significant digits,
so reading back a written file reproduces the in-memory values bit for
bit. CSV files use ``,`` and ``\\n`` and carry a header row, optionally
preceded by ``# key=value`` metadata lines.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ._validation import check_int, check_random_state, check_real
from .exceptions import ConfigError, ParseError, SchemaError
from .oracle import GmmClassModel, Mixture


def fmt(value):
    return format(float(value), ".17g")


# --------------------------------------------------------------------------
# planted models


def planted_weights(n_modes, profile="balanced", ratio=1.0):
    """Mixture weights; ``imbalanced`` decays geometrically so that the
    lightest mode weighs ``ratio`` times the heaviest."""
    n_modes = check_int(n_modes, "modes_per_class", minimum=1)
    if profile == "balanced":
        return np.full(n_modes, 1.0 / n_modes)
    if profile != "imbalanced":
        raise ConfigError(f"unknown profile {profile!r}", field="weights")
    ratio = check_real(ratio, "ratio", low=0.0, high=1.0, low_open=True)
    if n_modes == 1:
        return np.ones(1)
    raw = ratio ** (np.arange(n_modes) / (n_modes - 1))
    return raw / raw.sum()


def mode_layout(n_modes, separation, dim):
    """Points with pairwise distance >= ``separation``, centred on the origin.

    A regular polygon in the first two coordinates (a line when ``dim`` is 1).
    """
    if n_modes == 1:
        return np.zeros((1, dim))
    pts = np.zeros((n_modes, dim))
    if dim == 1 or n_modes == 2:
        pts[:, 0] = (np.arange(n_modes) - (n_modes - 1) / 2.0) * separation
        return pts
    radius = separation / (2.0 * np.sin(np.pi / n_modes))
    angle = 2.0 * np.pi * np.arange(n_modes) / n_modes
    pts[:, 0] = radius * np.cos(angle)
    pts[:, 1] = radius * np.sin(angle)
    return pts


def make_planted_model(n_classes=2, modes_per_class=8, separation=10.0,
                       profile="balanced", ratio=1.0, variance=1.0, dim=2,
                       rng=None, shuffle_weights=False):
    """Class-conditional mixture with known, well separated modes.

    Each class gets the same mode layout (see :func:`mode_layout`),
    translated along the first axis so that modes of different classes
    also stay ``separation`` apart. With ``shuffle_weights`` the weight
    order is permuted per class using ``rng``.
    """
    n_classes = check_int(n_classes, "n_classes", minimum=1)
    modes_per_class = check_int(modes_per_class, "modes_per_class", minimum=1)
    dim = check_int(dim, "dim", minimum=1)
    separation = check_real(separation, "separation", low=0.0, low_open=True)
    variance = check_real(variance, "variance", low=0.0, low_open=True)
    weights = planted_weights(modes_per_class, profile, ratio)
    layout = mode_layout(modes_per_class, separation, dim)
    extent = np.ptp(layout[:, 0]) if modes_per_class > 1 else 0.0
    if dim >= 2 and modes_per_class > 2:
        extent = 2.0 * np.linalg.norm(layout[0])
    spacing = extent + separation
    gen = check_random_state(rng) if shuffle_weights else None
    comps = {}
    for c in range(n_classes):
        offset = np.zeros(dim)
        offset[0] = (c - (n_classes - 1) / 2.0) * spacing
        w = gen.permutation(weights) if gen is not None else weights
        comps[c] = Mixture(w, layout + offset, np.full(modes_per_class, variance))
    return GmmClassModel(comps)


def make_overlap_model(n_classes=5, inner_radius=20.0, outer_radius=40.0,
                       minor_offsets=(0.2, 0.45, 0.7), heavy_weight=0.7, variance=1.0):
    """Two-dimensional classes whose light modes reach into a neighbour's sector.

    Class ``c`` owns the sector around angle ``2*pi*c/n_classes``. Its heavy
    mode sits at ``inner_radius`` on the sector axis; the light modes sit at
    ``outer_radius``, rotated by ``minor_offsets`` (fractions of the sector
    width) toward class ``c + 1``. Offsets above 0.5 cross the sector boundary,
    so a classifier that never sees those modes misplaces the boundary.
    """
    n_classes = check_int(n_classes, "n_classes", minimum=2)
    heavy_weight = check_real(heavy_weight, "heavy_weight", low=0.0, high=1.0, low_open=True)
    variance = check_real(variance, "variance", low=0.0, low_open=True)
    offsets = np.asarray(minor_offsets, dtype=np.float64).reshape(-1)
    if offsets.size == 0 and heavy_weight != 1.0:
        raise ConfigError("heavy_weight must be 1 without minor modes", field="heavy_weight")
    width = 2.0 * np.pi / n_classes
    comps = {}
    for c in range(n_classes):
        theta = c * width
        angles = theta + offsets * width
        means = np.vstack([[inner_radius * np.cos(theta), inner_radius * np.sin(theta)],
                           np.column_stack([outer_radius * np.cos(angles),
                                            outer_radius * np.sin(angles)])])
        weights = np.concatenate([[heavy_weight],
                                  np.full(offsets.size, (1.0 - heavy_weight) / max(offsets.size, 1))])
        comps[c] = Mixture(weights, means, np.full(len(means), variance))
    return GmmClassModel(comps)


# --------------------------------------------------------------------------
# low-level helpers


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _render_csv(meta, header, rows):
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path):
    """Return ``(meta, header, rows)`` with 1-based line numbers per row."""
    meta, header, rows = {}, None, []
    with open(path, newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if header is None and line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise ParseError("metadata line must read '# key=value'", lineno, path)
            meta[key.strip()] = value
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = fields
        else:
            rows.append((lineno, fields))
    if header is None:
        raise ParseError("missing header row", path=path)
    return meta, header, rows


def _dim_columns(header, start, prefix, path):
    names = header[start:]
    for j, name in enumerate(names):
        if name != f"{prefix}{j}":
            raise ParseError(f"expected column {prefix}{j}, found {name!r}", 1, path)
    return len(names)


def _floats(fields, lineno, path):
    try:
        vals = np.array([float(f) for f in fields], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from None
    if not np.all(np.isfinite(vals)):
        raise SchemaError("non-finite value", lineno, path)
    return vals


def _int(text, lineno, path, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {text!r}", lineno, path) from None


def _check_width(fields, width, lineno, path):
    if len(fields) != width:
        raise ParseError(f"expected {width} columns, found {len(fields)}", lineno, path)


# --------------------------------------------------------------------------
# datasets


def write_dataset(path, X, y, dim=None):
    """Labelled points: ``# dim=..``, ``# classes=..``, ``# sizes=c:n,..``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if dim is None:
        dim = X.shape[1]
    X = X.reshape(-1, dim)
    classes = sorted(set(int(c) for c in y.tolist()))
    sizes = ",".join(f"{c}:{int((y == c).sum())}" for c in classes)
    meta = {"dim": dim, "classes": len(classes), "sizes": sizes}
    header = ["class"] + [f"dim_{j}" for j in range(dim)]
    rows = [[int(c)] + [fmt(v) for v in x] for c, x in zip(y.tolist(), X)]
    atomic_write_text(path, _render_csv(meta, header, rows))


def read_dataset(path):
    """Inverse of :func:`write_dataset`; returns ``(X, y)``."""
    meta, header, rows = _read_csv(path)
    if header[:1] != ["class"]:
        raise ParseError("first column must be 'class'", 1, path)
    dim = _dim_columns(header, 1, "dim_", path)
    try:
        declared_dim = int(meta["dim"])
        n_classes = int(meta["classes"])
        sizes = {}
        if meta.get("sizes"):
            for part in meta["sizes"].split(","):
                c, n = part.split(":")
                sizes[int(c)] = int(n)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad dataset metadata: {exc}", path=path) from None
    if declared_dim != dim:
        raise SchemaError(f"header declares dim={declared_dim} but has {dim} columns",
                          path=path)
    if len(sizes) != n_classes:
        raise SchemaError(f"header declares {n_classes} classes but sizes lists "
                          f"{len(sizes)}", path=path)
    X = np.empty((len(rows), dim))
    y = np.empty(len(rows), dtype=np.int64)
    for i, (lineno, fields) in enumerate(rows):
        _check_width(fields, dim + 1, lineno, path)
        y[i] = _int(fields[0], lineno, path, "class")
        if y[i] not in sizes:
            raise SchemaError(f"class {y[i]} not declared in header", lineno, path)
        X[i] = _floats(fields[1:], lineno, path)
    for c, n in sizes.items():
        if int((y == c).sum()) != n:
            raise SchemaError(f"class {c}: header says {n} rows, found "
                              f"{int((y == c).sum())}", path=path)
    return X, y


# --------------------------------------------------------------------------
# model files
#
#   dim <d>
#   class <id> <prior>
#   component <weight> <variance> <mean_0> ... <mean_{d-1}>
#
# ``component`` lines belong to the preceding ``class`` line; ``#`` starts a
# comment line.


def dumps_model(model):
    lines = ["# modeguide gaussian-mixture model", f"dim {model.dim}"]
    for c in model.classes:
        mix = model.mixture(c)
        lines.append(f"class {c} {fmt(model.priors[c])}")
        for w, v, mu in zip(mix.weights, mix.variances, mix.means):
            lines.append(" ".join(["component", fmt(w), fmt(v)] + [fmt(m) for m in mu]))
    return "\n".join(lines) + "\n"


def write_model(path, model):
    atomic_write_text(path, dumps_model(model))


def loads_model(text, path=None):
    dim = None
    blocks = {}
    priors = {}
    current = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "dim":
            if len(parts) != 2 or dim is not None:
                raise ParseError("expected a single 'dim <d>' line", lineno, path)
            dim = _int(parts[1], lineno, path, "dim")
        elif kind == "class":
            if len(parts) != 3:
                raise ParseError("expected 'class <id> <prior>'", lineno, path)
            current = _int(parts[1], lineno, path, "class id")
            if current in blocks:
                raise SchemaError(f"duplicate class {current}", lineno, path)
            blocks[current] = []
            priors[current] = float(_floats(parts[2:], lineno, path)[0])
        elif kind == "component":
            if dim is None or current is None:
                raise ParseError("component before 'dim' and 'class' lines", lineno, path)
            if len(parts) != 3 + dim:
                raise SchemaError(f"component needs {dim} mean values, found "
                                  f"{len(parts) - 3}", lineno, path)
            blocks[current].append(_floats(parts[1:], lineno, path))
        else:
            raise ParseError(f"unknown directive {kind!r}", lineno, path)
    if dim is None or not blocks:
        raise ParseError("model needs a 'dim' line and at least one class", path=path)
    comps = {}
    for c, rows in blocks.items():
        if not rows:
            raise SchemaError(f"class {c} has no components", path=path)
        arr = np.stack(rows)
        try:
            comps[c] = Mixture(arr[:, 0], arr[:, 2:], arr[:, 1])
        except ValueError as exc:
            raise SchemaError(f"class {c}: {exc}", path=path) from None
    try:
        return GmmClassModel(comps, priors)
    except ValueError as exc:
        raise SchemaError(str(exc), path=path) from None


def read_model(path):
    return loads_model(Path(path).read_text(), path=str(path))


# --------------------------------------------------------------------------
# mode sets


def write_modesets(path, modesets):
    """One file per discovery run: ``# method=<tag>``, then one row per mode."""
    modesets = list(modesets)
    methods = {m.method for m in modesets}
    if len(methods) != 1:
        raise ConfigError(f"mode sets mix methods {sorted(methods)}", field="method")
    dim = modesets[0].dim
    header = ["class", "mode_index"] + [f"dim_{j}" for j in range(dim)]
    rows = [
        [ms.cls, i] + [fmt(v) for v in mode]
        for ms in modesets for i, mode in enumerate(ms.modes)
    ]
    atomic_write_text(path, _render_csv({"method": methods.pop()}, header, rows))


def read_modesets(path):
    """Return ``{class id: ModeSet}`` in file order."""
    from .modes import ModeSet

    meta, header, rows = _read_csv(path)
    if header[:2] != ["class", "mode_index"]:
        raise ParseError("columns must start with class,mode_index", 1, path)
    if "method" not in meta:
        raise ParseError("missing '# method=' line", path=path)
    dim = _dim_columns(header, 2, "dim_", path)
    grouped = {}
    for lineno, fields in rows:
        _check_width(fields, dim + 2, lineno, path)
        c = _int(fields[0], lineno, path, "class")
        idx = _int(fields[1], lineno, path, "mode_index")
        group = grouped.setdefault(c, [])
        if idx != len(group):
            raise SchemaError(f"class {c}: mode_index {idx} out of order", lineno, path)
        group.append(_floats(fields[2:], lineno, path))
    return {c: ModeSet(c, np.stack(g), meta["method"]) for c, g in grouped.items()}


# --------------------------------------------------------------------------
# distilled sets


def write_distilled(path, ds):
    meta = {"ipc": ds.ipc,
            "provenance": json.dumps(ds.provenance, sort_keys=True)}
    header = ["class", "mode_index", "seed"] + [f"dim_{j}" for j in range(ds.dim)]
    rows = [
        [int(c), int(m), int(s)] + [fmt(v) for v in x]
        for c, m, s, x in zip(ds.y, ds.mode_index, ds.seeds, ds.X)
    ]
    atomic_write_text(path, _render_csv(meta, header, rows))


def read_distilled(path):
    from .distill import DistilledSet

    meta, header, rows = _read_csv(path)
    if header[:3] != ["class", "mode_index", "seed"]:
        raise ParseError("columns must start with class,mode_index,seed", 1, path)
    dim = _dim_columns(header, 3, "dim_", path)
    try:
        ipc = int(meta["ipc"])
        provenance = json.loads(meta.get("provenance", "{}"))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad distilled-set metadata: {exc}", path=path) from None
    n = len(rows)
    X = np.empty((n, dim))
    y = np.empty(n, dtype=np.int64)
    mode_index = np.empty(n, dtype=np.int64)
    seeds = np.empty(n, dtype=np.uint64)
    for i, (lineno, fields) in enumerate(rows):
        _check_width(fields, dim + 3, lineno, path)
        y[i] = _int(fields[0], lineno, path, "class")
        mode_index[i] = _int(fields[1], lineno, path, "mode_index")
        seeds[i] = _int(fields[2], lineno, path, "seed")
        X[i] = _floats(fields[3:], lineno, path)
    try:
        return DistilledSet(X, y, mode_index, seeds, ipc, provenance)
    except ValueError as exc:
        raise SchemaError(str(exc), path=path) from None


# --------------------------------------------------------------------------
# generic tables (metrics reports, sweeps)


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    return str(value)


def write_table(path, header, rows, meta=None):
    rows = [[_cell(v) for v in row] for row in rows]
    atomic_write_text(path, _render_csv(meta or {}, list(header), rows))


def read_table(path, numeric=()):
    """Rows as dicts; columns named in ``numeric`` are parsed as floats."""
    meta, header, rows = _read_csv(path)
    out = []
    for lineno, fields in rows:
        _check_width(fields, len(header), lineno, path)
        rec = dict(zip(header, fields))
        for key in numeric:
            if rec.get(key, "") != "":
                rec[key] = float(_floats([rec[key]], lineno, path)[0])
        out.append(rec)
    return meta, header, out


def write_trajectory(path, traj):
    dim = traj.states.shape[1]
    header = (["step"] + [f"dim_{j}" for j in range(dim)]
              + [f"x0hat_{j}" for j in range(dim)] + [f"g_{j}" for j in range(dim)])
    rows = []
    for t, x, x0, g in traj.records():
        gcells = [""] * dim if g is None else [fmt(v) for v in g]
        rows.append([t] + [fmt(v) for v in x] + [fmt(v) for v in x0] + gcells)
    atomic_write_text(path, _render_csv({}, header, rows))


def read_trajectory(path):
    from .sampler import Trajectory

    _, header, rows = _read_csv(path)
    if not header or header[0] != "step" or (len(header) - 1) % 3:
        raise ParseError("trajectory header must be step + 3*d columns", 1, path)
    dim = (len(header) - 1) // 3
    steps, xs, x0s, gs = [], [], [], []
    for lineno, fields in rows:
        _check_width(fields, 1 + 3 * dim, lineno, path)
        steps.append(_int(fields[0], lineno, path, "step"))
        xs.append(_floats(fields[1:1 + dim], lineno, path))
        x0s.append(_floats(fields[1 + dim:1 + 2 * dim], lineno, path))
        g = fields[1 + 2 * dim:]
        gs.append(np.full(dim, np.nan) if all(v == "" for v in g)
                  else _floats(g, lineno, path))
    return Trajectory(np.array(steps, dtype=np.int64), np.array(xs).reshape(-1, dim),
                      np.array(x0s).reshape(-1, dim), np.array(gs).reshape(-1, dim))
