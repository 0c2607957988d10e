"""One-parameter sweeps over the guidance settings.

Every cell of a sweep is evaluated on the same list of run seeds, so two
cells differ only in the swept parameter. Cells may run in parallel; the
rows are assembled in the order of ``values`` regardless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ._validation import check_int, check_real
from .distill import distill, reference_data
from .exceptions import ConfigError, ModeGuideError
from .metrics import DEFAULT_K_NEAREST, evaluate
from .sampler import GuidanceConfig
from .schedule import build_linear_schedule

SWEEP_COLUMNS = ("accuracy", "accuracy_std", "diversity", "representativeness",
                 "coverage", "fidelity")

PARAMETERS = {"t_stop": "t_stop", "lambda": "lambda_"}


@dataclass
class SweepResult:
    """Rows of a sweep, one per swept value.

    ``cells`` holds the per-seed metric vectors, shape ``(len(values), n_seeds)``
    per column, for paired comparisons between cells.
    """

    parameter: str
    values: list
    seeds: list
    table: np.ndarray
    cells: dict = field(default_factory=dict)

    @property
    def header(self):
        return [self.parameter, *SWEEP_COLUMNS]

    def rows(self):
        return [[v, *map(float, row)] for v, row in zip(self.values, self.table)]

    def column(self, name):
        return self.table[:, SWEEP_COLUMNS.index(name)]

    def best(self, name="accuracy"):
        """Swept value with the highest mean of ``name`` (first on ties)."""
        return self.values[int(np.argmax(self.column(name)))]


def run_cell(model, cfg, seed, *, ipc, method="kmeans", sched=None, n_modes=None,
             test_count=500, repeats=20, coverage_radius=None,
             k_nearest=DEFAULT_K_NEAREST, reference_size=None):
    """Distil and evaluate once; returns the per-cell metric vector."""
    sched = sched if sched is not None else build_linear_schedule()
    ds = distill(model, method, cfg, ipc, seed, sched, reference_size=reference_size,
                 n_modes=n_modes)
    ref_X, ref_y = reference_data(model, ipc, seed, reference_size)
    rep = evaluate(ds, model, ref_X, ref_y, k_nearest=k_nearest,
                   coverage_radius=coverage_radius, test_count=test_count,
                   repeats=repeats, rng=seed)
    return np.array([rep.accuracy_mean, rep.accuracy_std, float(rep.diversity.mean()),
                     float(rep.representativeness.mean()), rep.coverage, rep.fidelity])


def _guarded(label, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ModeGuideError as exc:
        exc.args = (f"sweep cell {label}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def sweep(model, parameter, values, cfg=None, *, ipc=10, seeds=(0,), method="kmeans",
          sched=None, n_jobs=1, **cell_kwargs):
    """Evaluate ``distill`` + ``evaluate`` at each value of one parameter.

    Parameters
    ----------
    model : GmmClassModel
    parameter : {"t_stop", "lambda"}
    values : sequence
        Values of the swept parameter, reported in this order.
    cfg : GuidanceConfig, optional
        Settings held fixed across the sweep.
    seeds : sequence of int
        Run seeds shared by every cell. Metrics are averaged over them;
        ``accuracy_std`` is the mean of the per-seed standard deviations.
    n_jobs : int
        Worker processes (joblib); results do not depend on it.
    **cell_kwargs
        Forwarded to :func:`run_cell`.

    Returns
    -------
    SweepResult
    """
    if parameter not in PARAMETERS:
        raise ConfigError(f"must be one of {sorted(PARAMETERS)}", field="parameter")
    cfg = cfg if cfg is not None else GuidanceConfig()
    sched = sched if sched is not None else build_linear_schedule()
    values = list(values)
    if not values:
        raise ConfigError("at least one value is required", field="values")
    seeds = [check_int(s, "seed", minimum=0) for s in seeds]
    if not seeds:
        raise ConfigError("at least one seed is required", field="seeds")
    configs = []
    for v in values:
        if parameter == "t_stop":
            v = check_int(v, "t_stop", minimum=0, maximum=sched.num_sampler_steps)
        else:
            v = check_real(v, "lambda", low=0.0)
        configs.append(cfg.replace(**{PARAMETERS[parameter]: v}))
    values = [getattr(c, PARAMETERS[parameter]) for c in configs]
    jobs = [(f"{parameter}={v} seed={s}", c, s)
            for v, c in zip(values, configs) for s in seeds]
    out = Parallel(n_jobs=check_int(n_jobs, "jobs", minimum=1))(
        delayed(_guarded)(label, run_cell, model, c, s, ipc=ipc, method=method,
                          sched=sched, **cell_kwargs)
        for label, c, s in jobs)
    per_seed = np.array(out).reshape(len(values), len(seeds), len(SWEEP_COLUMNS))
    cells = {name: per_seed[:, :, j] for j, name in enumerate(SWEEP_COLUMNS)}
    return SweepResult(parameter, values, seeds, per_seed.mean(axis=1), cells)


def sweep_tstop(model, values=None, cfg=None, **kwargs):
    """Sweep ``t_stop``; defaults to ``S, S-5, ..., 0`` on the sampler grid."""
    sched = kwargs.get("sched") or build_linear_schedule()
    kwargs["sched"] = sched
    if values is None:
        values = list(range(sched.num_sampler_steps, -1, -5))
    return sweep(model, "t_stop", values, cfg, **kwargs)


def sweep_lambda(model, values=(0.0, 0.01, 0.1, 1.0, 10.0), cfg=None, **kwargs):
    """Sweep the mode-guidance strength."""
    return sweep(model, "lambda", values, cfg, **kwargs)
