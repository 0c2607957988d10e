"""Three-stage distillation: discover modes, guide sampling, stop guiding.

Randomness is organised so that any sample can be regenerated on its own:
every random stream is derived from the run seed plus a structural key
(stage, class position, sample index) through :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_points
from .exceptions import ConfigError, DiscoveryError, DivergenceError
from .modes import METHOD_ALIASES, ModeSet, make_discoverer
from .sampler import GuidanceConfig, reverse_process
from .schedule import build_linear_schedule

# stream kinds for derive_seed
SAMPLE_STREAM = 0
REFERENCE_STREAM = 1
DISCOVERY_STREAM = 2
TEST_STREAM = 3

REFERENCE_PER_IPC = 100


def derive_seed(run_seed, *key):
    """64-bit seed for the stream identified by ``key`` under ``run_seed``."""
    ss = np.random.SeedSequence(int(run_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _as_run_seed(random_state):
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    if random_state is None:
        return 0
    return check_int(random_state, "seed", minimum=0)


def assign_modes(ipc, n_modes):
    """Round-robin assignment: sample ``i`` follows mode ``i mod n_modes``."""
    return np.arange(ipc) % n_modes


@dataclass(eq=False)
class DistilledSet:
    """Synthetic samples ordered by (class, sample index)."""

    X: np.ndarray
    y: np.ndarray
    mode_index: np.ndarray
    seeds: np.ndarray
    ipc: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        self.mode_index = np.asarray(self.mode_index, dtype=np.int64).reshape(-1)
        self.seeds = np.asarray(self.seeds, dtype=np.uint64).reshape(-1)
        n = self.X.shape[0]
        if not (len(self.y) == len(self.mode_index) == len(self.seeds) == n):
            raise ValueError("X, y, mode_index and seeds must have equal length")
        for c in self.classes:
            count = int((self.y == c).sum())
            if count != self.ipc:
                raise ValueError(f"class {c} has {count} samples, expected ipc={self.ipc}")

    @property
    def classes(self):
        return sorted(set(self.y.tolist()))

    @property
    def dim(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def for_class(self, c):
        return self.X[self.y == c]

    def __eq__(self, other):
        return (isinstance(other, DistilledSet) and self.ipc == other.ipc
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)
                and np.array_equal(self.mode_index, other.mode_index)
                and np.array_equal(self.seeds, other.seeds)
                and self.provenance == other.provenance)


class ModeGuidedDistiller(BaseEstimator):
    """Distil a labelled dataset into ``ipc`` guided samples per class.

    ``fit`` discovers modes per class on the reference data; ``sample``
    runs the guided reverse process, one sample per (class, index), with
    sample ``i`` steered to mode ``i mod N``.

    Parameters
    ----------
    oracle : EpsilonOracle
        Noise predictor; must accept ``cls=None`` when ``cfg_scale != 1``.
    schedule : NoiseSchedule, optional
        Defaults to :func:`build_linear_schedule`.
    ipc : int
        Samples per class.
    method : str
        Discovery method tag or alias (``kmeans``, ``kmeans-closest``,
        ``gmm``, ``dbscan``, ``random``).
    n_modes : int, optional
        Modes per class; defaults to ``ipc``. Ignored by ``dbscan``.
    guidance : GuidanceConfig, optional
    eps_radius, min_pts :
        DBSCAN parameters.
    random_state : int
        Run seed.

    Attributes
    ----------
    classes_ : list
    modesets_ : dict
        Class id to :class:`ModeSet`.
    """

    def __init__(self, oracle, schedule=None, ipc=10, method="kmeans", n_modes=None,
                 guidance=None, eps_radius=None, min_pts=4, random_state=0):
        self.oracle = oracle
        self.schedule = schedule
        self.ipc = ipc
        self.method = method
        self.n_modes = n_modes
        self.guidance = guidance
        self.eps_radius = eps_radius
        self.min_pts = min_pts
        self.random_state = random_state

    def _settings(self):
        ipc = check_int(self.ipc, "ipc", minimum=1)
        if self.method not in METHOD_ALIASES:
            raise ConfigError(f"unknown method {self.method!r}", field="method")
        k = ipc if self.n_modes is None else check_int(self.n_modes, "k", minimum=1)
        sched = self.schedule if self.schedule is not None else build_linear_schedule()
        cfg = self.guidance if self.guidance is not None else GuidanceConfig()
        cfg.validate_for(sched)
        return ipc, k, sched, cfg, _as_run_seed(self.random_state)

    def fit(self, X, y):
        X = check_points(X)
        y = np.asarray(y).reshape(-1)
        if len(y) != len(X):
            raise ConfigError("X and y lengths differ", field="y")
        _, k, _, _, seed = self._settings()
        self.classes_ = sorted(set(y.tolist()))
        self.run_seed_ = seed
        self.modesets_ = {}
        tag = METHOD_ALIASES[self.method]
        for pos, c in enumerate(self.classes_):
            rng = np.random.default_rng(derive_seed(seed, DISCOVERY_STREAM, pos))
            est = make_discoverer(tag, k, rng, eps_radius=self.eps_radius,
                                  min_pts=self.min_pts)
            try:
                modes = est.fit(X[y == c]).modes_
            except (DiscoveryError, ConfigError) as exc:
                raise DiscoveryError(f"mode discovery failed for class {c!r}: {exc}") from exc
            self.modesets_[c] = ModeSet(c, modes, tag)
        return self

    def sample(self, record=False):
        """Generate the distilled set.

        Returns
        -------
        DistilledSet, or ``(DistilledSet, trajectories)`` with ``record=True``
        where ``trajectories`` maps class id to a list of Trajectory.
        """
        check_is_fitted(self, "modesets_")
        ipc, _, sched, cfg, seed = self._settings()
        xs, ys, idxs, seeds = [], [], [], []
        trajectories = {}
        for pos, c in enumerate(self.classes_):
            modeset = self.modesets_[c]
            assigned = assign_modes(ipc, modeset.n_modes)
            cls_seeds = [derive_seed(seed, SAMPLE_STREAM, pos, i) for i in range(ipc)]
            rngs = [np.random.default_rng(s) for s in cls_seeds]
            try:
                final, trajs = reverse_process(
                    self.oracle, c, modeset.modes[assigned], cfg, sched, rngs,
                    record=record)
            except DivergenceError as exc:
                raise DivergenceError(f"class {c!r}: {exc}", step=exc.step) from exc
            xs.append(final)
            ys.append(np.full(ipc, c))
            idxs.append(assigned)
            seeds.extend(cls_seeds)
            if record:
                trajectories[c] = trajs
        ds = DistilledSet(
            np.concatenate(xs), np.concatenate(ys), np.concatenate(idxs),
            np.array(seeds, dtype=np.uint64), ipc,
            provenance={
                "guidance": cfg.to_dict(),
                "method": METHOD_ALIASES[self.method],
                "schedule": sched.summary(),
                "seed": seed,
            },
        )
        return (ds, trajectories) if record else ds

    def fit_resample(self, X, y):
        ds = self.fit(X, y).sample()
        return ds.X, ds.y


def reference_data(model, ipc, run_seed, size=None):
    """Per-class reference draws used for discovery (``100 * ipc`` by default)."""
    size = REFERENCE_PER_IPC * ipc if size is None else check_int(size, "reference_size", minimum=1)
    Xs, ys = [], []
    for pos, c in enumerate(model.classes):
        rng = np.random.default_rng(derive_seed(run_seed, REFERENCE_STREAM, pos))
        Xs.append(model.sample_data(c, size, rng))
        ys.append(np.full(size, c))
    return np.concatenate(Xs), np.concatenate(ys)


def distill(model, method="kmeans", cfg=None, ipc=10, rng=0, sched=None,
            reference_size=None, eps_radius=None, min_pts=4, n_modes=None,
            record=False, oracle=None):
    """Draw a reference dataset from ``model`` and distil it.

    ``oracle`` defaults to the model's own analytic noise predictor.
    """
    seed = _as_run_seed(rng)
    sched = sched if sched is not None else build_linear_schedule()
    X, y = reference_data(model, check_int(ipc, "ipc", minimum=1), seed, reference_size)
    distiller = ModeGuidedDistiller(
        oracle if oracle is not None else model.as_oracle(sched), sched, ipc=ipc,
        method=method, n_modes=n_modes, guidance=cfg, eps_radius=eps_radius,
        min_pts=min_pts, random_state=seed,
    )
    return distiller.fit(X, y).sample(record=record)


def baseline_distill(model, cfg=None, ipc=10, rng=0, sched=None, **kwargs):
    """Unguided comparator: :func:`distill` with ``lambda = 0``."""
    cfg = (cfg if cfg is not None else GuidanceConfig()).replace(lambda_=0.0)
    return distill(model, cfg=cfg, ipc=ipc, rng=rng, sched=sched, **kwargs)
