"""Command-line front end.

Every option can be given as a flag or as a ``key = value`` line in the
file passed to ``--config``; flags win. Each run writes
``<out-dir>/<subcommand>.manifest.json`` echoing the resolved settings
and the SHA-256 of every file read or written, so rerunning with the
manifest's settings reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (atomic_write_text, make_overlap_model, make_planted_model, read_dataset,
                   read_distilled, read_model, read_trajectory, write_dataset,
                   write_distilled, write_model, write_modesets, write_table,
                   write_trajectory)
from .distill import DISCOVERY_STREAM, ModeGuidedDistiller, derive_seed, reference_data
from .exceptions import (ConfigError, DiscoveryError, DivergenceError, MetricError,
                         ModeGuideError, ParseError, PlotError, ShapeError,
                         SingularityError, TrainingError, UnknownClassError)
from .metrics import MetricsReport, diversity_table, evaluate
from .modes import METHOD_ALIASES, ModeSet, make_discoverer
from .plotting import plot_scatter, plot_sweep
from .sampler import SAMPLERS, GuidanceConfig
from .schedule import build_linear_schedule
from .sweeps import sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "MODEGUIDE_SEED"


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(kind):
    def parse(text):
        if isinstance(text, list):
            return [kind(v) for v in text]
        return [kind(v) for v in str(text).split(",") if v.strip()]
    parse.__name__ = f"list of {kind.__name__}"
    return parse


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


# name -> (type, default, help, extra flag aliases)
OPTIONS = {
    "seed": (int, None, f"run seed (fallback: ${SEED_ENV}, then 0)", ()),
    "out_dir": (str, ".", "directory for outputs and the manifest", ()),
    "out": (str, None, "primary output file name (relative to --out-dir)", ()),
    # planted models
    "benchmark": (str, "planted", "planted (polygon modes) or overlap (five-class sectors)", ()),
    "classes": (int, 2, "number of classes", ()),
    "modes_per_class": (int, 8, "modes per class", ()),
    "separation": (float, 10.0, "minimum distance between modes", ()),
    "profile": (str, "balanced", "mode weights: balanced or imbalanced", ()),
    "ratio": (float, 1.0, "lightest/heaviest weight ratio for imbalanced weights", ()),
    "variance": (float, 1.0, "component variance", ()),
    "dim": (int, 2, "data dimension", ()),
    "shuffle_weights": (_bool, False, "permute mode weights per class", ()),
    # inputs
    "model": (str, None, "model file", ()),
    "data": (str, None, "dataset CSV (reference data)", ()),
    "distilled": (_list(str), [], "distilled-set CSV(s), optionally name=path", ()),
    "trajectory": (_list(str), [], "trajectory CSV(s) to draw", ()),
    "count": (int, 1000, "points per class", ()),
    # discovery
    "ipc": (int, 10, "samples per class", ()),
    "method": (str, "kmeans", "discovery method: " + ", ".join(sorted(METHOD_ALIASES)), ()),
    "k": (_opt_int, None, "modes per class (default: ipc)", ()),
    "eps_radius": (_opt_float, None, "DBSCAN radius (default: median min_pts-th neighbour distance)", ()),
    "min_pts": (int, 4, "DBSCAN core-point threshold", ()),
    "reference_size": (_opt_int, None, "reference draws per class (default 100*ipc)", ()),
    # guidance
    "lambda": (float, 0.1, "mode guidance strength", ()),
    "t_stop": (int, 25, "sampler position below which guidance is off", ()),
    "cfg_scale": (float, 4.0, "classifier-free guidance weight", ()),
    "sampler": (str, "ddpm", "ddpm or ddim", ()),
    "eta": (float, 0.0, "DDIM stochasticity", ()),
    "sigma_kind": (str, "alpha_bar", "guidance scale: alpha_bar or beta", ()),
    "guidance_sign": (str, "subtract", "subtract or add", ()),
    # schedule
    "total_steps": (int, 1000, "training-grid steps", ()),
    "beta_start": (float, 1e-4, "first beta", ()),
    "beta_end": (float, 0.02, "last beta", ()),
    "sampler_steps": (int, 50, "sampler steps S", ("--steps",)),
    "trajectories": (_bool, False, "also write one trajectory CSV per sample", ()),
    # evaluation
    "k_nearest": (int, 50, "neighbours for representativeness", ()),
    "coverage_radius": (_opt_float, None, "coverage radius (default 4 x largest component sd)", ()),
    "test_count": (int, 500, "test draws per class per repeat", ()),
    "repeats": (int, 20, "test repeats", ()),
    # sweeps
    "values": (_list(float), None, "swept values, comma separated", ()),
    "seeds": (int, 5, "number of shared run seeds per cell", ()),
    "jobs": (int, 1, "parallel worker processes", ()),
    "title": (str, "distilled samples", "figure title", ()),
}

COMMON = ("seed", "out_dir", "out")
MODEL_GEN = ("benchmark", "classes", "modes_per_class", "separation", "profile", "ratio",
             "variance", "dim", "shuffle_weights")
GUIDANCE = ("lambda", "t_stop", "cfg_scale", "sampler", "eta", "sigma_kind", "guidance_sign")
SCHEDULE = ("total_steps", "beta_start", "beta_end", "sampler_steps")
DISCOVERY = ("ipc", "method", "k", "eps_radius", "min_pts", "reference_size")
EVAL = ("k_nearest", "coverage_radius", "test_count", "repeats")

SUBCOMMANDS = {
    "gen-model": ("write a planted class-conditional mixture model", MODEL_GEN, "model.txt"),
    "gen-data": ("draw a labelled dataset from a model", ("model", "count"), "data.csv"),
    "discover": ("discover modes per class", ("model", "data") + DISCOVERY, "modes.csv"),
    "distill": ("generate a mode-guided distilled set",
                ("model", "data") + DISCOVERY + GUIDANCE + SCHEDULE + ("trajectories",),
                "distilled.csv"),
    "evaluate": ("score distilled sets", ("model", "data", "distilled") + EVAL, "metrics.csv"),
    "sweep-tstop": ("sweep t_stop", ("model", "values", "seeds", "jobs") + DISCOVERY
                    + GUIDANCE + SCHEDULE + EVAL, "sweep_tstop.csv"),
    "sweep-lambda": ("sweep lambda", ("model", "values", "seeds", "jobs") + DISCOVERY
                     + GUIDANCE + SCHEDULE + EVAL, "sweep_lambda.csv"),
    "plot": ("scatter plot of data, modes, distilled sets and trajectories",
             ("model", "data", "distilled", "trajectory", "title"), "plot.svg"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="modeguide", description="Mode-guided diffusion dataset distillation "
                                      "on analytic Gaussian mixtures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (helptext, keys, default_out) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="file of 'key = value' lines; flags override it")
        for key in COMMON + keys:
            kind, default, helpstr, aliases = OPTIONS[key]
            flags = ["--" + key.replace("_", "-"), *aliases]
            shown = default_out if key == "out" else default
            p.add_argument(*flags, dest=key, default=argparse.SUPPRESS,
                           metavar=key.upper(), help=f"{helpstr} [default: {shown}]")
    return parser


def read_config_file(path, allowed):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", field="config")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}", field="config")
        out[key] = value
    return out


def resolve(command, flags, environ=None):
    """Merge defaults, config file and flags into typed settings."""
    environ = os.environ if environ is None else environ
    keys = COMMON + SUBCOMMANDS[command][1]
    raw = {k: OPTIONS[k][1] for k in keys}
    raw["out"] = SUBCOMMANDS[command][2]
    config_path = flags.pop("config", None)
    if config_path:
        raw.update(read_config_file(config_path, keys))
    raw.update(flags)
    if raw["seed"] is None and environ.get(SEED_ENV, "").strip():
        raw["seed"] = environ[SEED_ENV].strip()
    settings = {}
    for key, value in raw.items():
        kind = OPTIONS[key][0]
        try:
            settings[key] = value if value is None else kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot parse {value!r}: {exc}", field=key) from None
    if settings["seed"] is None:
        settings["seed"] = 0
    if settings["seed"] < 0:
        raise ConfigError("must be >= 0", field="seed")
    return settings


# --------------------------------------------------------------------------
# helpers


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Run:
    """Tracks files read and written for the manifest."""

    def __init__(self, command, settings):
        self.command = command
        self.settings = settings
        self.out_dir = Path(settings["out_dir"])
        self.inputs = {}
        self.outputs = {}

    def path(self, name):
        return self.out_dir / name

    def read(self, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        self.inputs[str(path)] = _sha256(path)
        return path

    def wrote(self, path):
        self.outputs[str(Path(path).relative_to(self.out_dir))] = _sha256(path)

    def manifest(self):
        body = {
            "tool": "modeguide",
            "version": __version__,
            "command": self.command,
            "settings": self.settings,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        path = self.path(f"{self.command}.manifest.json")
        atomic_write_text(path, json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path


def _need(settings, key):
    if settings.get(key) in (None, "", []):
        raise ConfigError("is required for this command", field=key)
    return settings[key]


def _schedule(s):
    return build_linear_schedule(s["total_steps"], s["beta_start"], s["beta_end"],
                                 s["sampler_steps"])


def _guidance(s):
    if s["sampler"] not in SAMPLERS:
        raise ConfigError(f"must be one of {SAMPLERS}", field="sampler")
    return GuidanceConfig(lambda_=s["lambda"], t_stop=s["t_stop"], cfg_scale=s["cfg_scale"],
                          sampler=s["sampler"], ddim_eta=s["eta"], sigma_kind=s["sigma_kind"],
                          guidance_sign=s["guidance_sign"])


def _method(s):
    if s["method"] not in METHOD_ALIASES:
        raise ConfigError(f"must be one of {sorted(METHOD_ALIASES)}", field="method")
    return s["method"]


def _reference(run, model):
    s = run.settings
    if s.get("data"):
        X, y = read_dataset(run.read(s["data"]))
        return X, y
    return reference_data(model, s["ipc"], s["seed"], s["reference_size"])


def _named(entries):
    out = {}
    for i, entry in enumerate(entries):
        name, sep, path = entry.partition("=")
        if not sep:
            name, path = Path(entry).stem, entry
        if name in out:
            name = f"{name}-{i}"
        out[name] = path
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_model(run):
    s = run.settings
    if s["benchmark"] == "planted":
        model = make_planted_model(s["classes"], s["modes_per_class"], s["separation"],
                                   s["profile"], s["ratio"], s["variance"], s["dim"],
                                   rng=s["seed"], shuffle_weights=s["shuffle_weights"])
    elif s["benchmark"] == "overlap":
        model = make_overlap_model(n_classes=max(s["classes"], 2), variance=s["variance"])
    else:
        raise ConfigError("must be 'planted' or 'overlap'", field="benchmark")
    out = run.path(s["out"])
    write_model(out, model)
    run.wrote(out)


def cmd_gen_data(run):
    s = run.settings
    model = read_model(run.read(_need(s, "model")))
    count = s["count"]
    if count < 1:
        raise ConfigError("must be >= 1", field="count")
    X, y = reference_data(model, 1, s["seed"], count)
    out = run.path(s["out"])
    write_dataset(out, X, y, model.dim)
    run.wrote(out)


def cmd_discover(run):
    s = run.settings
    if not s.get("data") and not s.get("model"):
        raise ConfigError("give --data or --model", field="data")
    model = read_model(run.read(s["model"])) if s.get("model") else None
    X, y = _reference(run, model)
    k = s["k"] if s["k"] is not None else s["ipc"]
    tag = METHOD_ALIASES[_method(s)]
    sets = []
    for pos, c in enumerate(sorted(set(y.tolist()))):
        rng = np.random.default_rng(derive_seed(s["seed"], DISCOVERY_STREAM, pos))
        est = make_discoverer(tag, k, rng, eps_radius=s["eps_radius"], min_pts=s["min_pts"])
        try:
            sets.append(ModeSet(c, est.fit(X[y == c]).modes_, tag))
        except (DiscoveryError, ConfigError) as exc:
            raise DiscoveryError(f"mode discovery failed for class {c!r}: {exc}") from exc
    out = run.path(s["out"])
    write_modesets(out, sets)
    run.wrote(out)


def cmd_distill(run):
    s = run.settings
    model = read_model(run.read(_need(s, "model")))
    sched = _schedule(s)
    cfg = _guidance(s)
    X, y = _reference(run, model)
    est = ModeGuidedDistiller(model.as_oracle(sched), sched, ipc=s["ipc"], method=_method(s),
                              n_modes=s["k"], guidance=cfg, eps_radius=s["eps_radius"],
                              min_pts=s["min_pts"], random_state=s["seed"])
    est.fit(X, y)
    result = est.sample(record=s["trajectories"])
    ds, trajs = result if s["trajectories"] else (result, {})
    out = run.path(s["out"])
    write_distilled(out, ds)
    run.wrote(out)
    modes_out = run.path(Path(s["out"]).stem + ".modes.csv")
    write_modesets(modes_out, est.modesets_.values())
    run.wrote(modes_out)
    for c, items in trajs.items():
        for i, traj in enumerate(items):
            path = run.path(f"trajectories/class{c}_sample{i}.csv")
            write_trajectory(path, traj)
            run.wrote(path)


def cmd_evaluate(run):
    s = run.settings
    model = read_model(run.read(_need(s, "model")))
    sets = _named(_need(s, "distilled"))
    reports = []
    for name, path in sets.items():
        ds = read_distilled(run.read(path))
        if s.get("data"):
            ref_X, ref_y = read_dataset(run.read(s["data"]))
        else:
            seed = int(ds.provenance.get("seed", s["seed"]))
            ref_X, ref_y = reference_data(model, ds.ipc, seed)
        rep = evaluate(ds, model, ref_X, ref_y, k_nearest=s["k_nearest"],
                       coverage_radius=s["coverage_radius"], test_count=s["test_count"],
                       repeats=s["repeats"], rng=s["seed"])
        if len(sets) > 1:
            rep.method = f"{name}:{rep.method}"
        reports.append(rep)
    out = run.path(s["out"])
    write_table(out, ("set",) + MetricsReport.COLUMNS,
                [[name] + row for name, rep in zip(sets, reports) for row in rep.rows()])
    run.wrote(out)
    samples = run.path(Path(s["out"]).stem + ".samples.csv")
    write_table(samples, ("set", "class", "method", "diversity", "representativeness",
                          "representativeness_score"),
                [[name] + row for name, rep in zip(sets, reports) for row in rep.sample_rows()])
    run.wrote(samples)
    header, rows = diversity_table(reports)
    div = run.path(Path(s["out"]).stem + ".diversity.csv")
    write_table(div, header, rows)
    run.wrote(div)


def _cmd_sweep(run, parameter):
    s = run.settings
    model = read_model(run.read(_need(s, "model")))
    sched = _schedule(s)
    values = s["values"]
    if values is None:
        if parameter == "t_stop":
            values = list(range(sched.num_sampler_steps, -1, -5))
        else:
            values = [0.0, 0.01, 0.1, 1.0, 10.0]
    if parameter == "t_stop":
        bad = [v for v in values if v != int(v)]
        if bad:
            raise ConfigError(f"t_stop values must be integers, got {bad}", field="values")
        values = [int(v) for v in values]
    if s["seeds"] < 1:
        raise ConfigError("must be >= 1", field="seeds")
    seeds = [s["seed"] + i for i in range(s["seeds"])]
    result = sweep(model, parameter, values, _guidance(s), ipc=s["ipc"], seeds=seeds,
                   method=_method(s), sched=sched, n_jobs=s["jobs"], n_modes=s["k"],
                   test_count=s["test_count"], repeats=s["repeats"],
                   coverage_radius=s["coverage_radius"], k_nearest=s["k_nearest"],
                   reference_size=s["reference_size"])
    out = run.path(s["out"])
    write_table(out, result.header, result.rows(),
                meta={"seeds": ",".join(map(str, seeds))})
    run.wrote(out)
    svg = run.path(Path(s["out"]).stem + ".svg")
    plot_sweep(svg, result, columns=("accuracy", "diversity", "coverage"))
    run.wrote(svg)
    return result


def cmd_sweep_tstop(run):
    _cmd_sweep(run, "t_stop")


def cmd_sweep_lambda(run):
    _cmd_sweep(run, "lambda")


def cmd_plot(run):
    s = run.settings
    model = read_model(run.read(s["model"])) if s.get("model") else None
    reference = None
    if s.get("data"):
        reference = read_dataset(run.read(s["data"]))
    modes = np.vstack([model.modes(c) for c in model.classes]) if model is not None else None
    distilled = {name: read_distilled(run.read(p)) for name, p in _named(s["distilled"]).items()}
    trajs = [read_trajectory(run.read(p)).states for p in s["trajectory"]]
    if reference is None and modes is None and not distilled and not trajs:
        raise ConfigError("nothing to plot: give --model, --data, --distilled or --trajectory",
                          field="model")
    out = run.path(s["out"])
    plot_scatter(out, reference, modes, distilled, trajs, title=s["title"])
    run.wrote(out)


COMMANDS = {
    "gen-model": cmd_gen_model,
    "gen-data": cmd_gen_data,
    "discover": cmd_discover,
    "distill": cmd_distill,
    "evaluate": cmd_evaluate,
    "sweep-tstop": cmd_sweep_tstop,
    "sweep-lambda": cmd_sweep_lambda,
    "plot": cmd_plot,
}


def exit_code_for(exc):
    """Map an exception onto the documented exit codes."""
    if isinstance(exc, (ParseError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DivergenceError, SingularityError, DiscoveryError, MetricError,
                        TrainingError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ConfigError, ShapeError, PlotError, UnknownClassError, ValueError)):
        return EXIT_CONFIG
    return None


def main(argv=None, environ=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        settings = resolve(command, args, environ)
        run = _Run(command, settings)
        with np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[command](run)
        run.manifest()
    except (ModeGuideError, OSError, ValueError, ArithmeticError) as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        print(f"modeguide {command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
