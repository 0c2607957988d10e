"""Discrete variance-preserving noise schedule.

Timesteps are indexed ``0 .. total_steps - 1`` on the training grid, with
``alpha_bars[t] = prod_{s <= t} (1 - betas[s])``. The sampler walks a
strided subsequence of that grid from the noisiest entry down to step 0;
the virtual index ``-1`` denotes clean data (``alpha_bar = 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_real, check_same_shape
from .exceptions import ConfigError

DEFAULT_TOTAL_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_SAMPLER_STEPS = 50


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step diffusion coefficients.

    Attributes
    ----------
    total_steps : int
        Size ``T`` of the training grid.
    betas : ndarray of shape (T,)
        Per-step variances, strictly inside (0, 1).
    sampler_steps : ndarray of shape (S,)
        Strictly increasing training-grid indices visited at sampling
        time, starting at 0.
    alpha_bars : ndarray of shape (T,)
        Cumulative products of ``1 - betas``; derived, not passed in.
    """

    total_steps: int
    betas: np.ndarray
    sampler_steps: np.ndarray
    alpha_bars: np.ndarray = field(init=False)
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64)
        steps = np.array(self.sampler_steps, dtype=np.int64)
        if betas.ndim != 1 or betas.shape[0] != self.total_steps:
            raise ConfigError("length must equal total_steps", field="betas")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigError("values must lie strictly in (0, 1)", field="betas")
        alpha_bars = np.cumprod(1.0 - betas)
        if steps.ndim != 1 or steps.size == 0:
            raise ConfigError("must be a nonempty 1-d sequence", field="sampler_steps")
        if np.any(np.diff(steps) <= 0):
            raise ConfigError("must be strictly increasing", field="sampler_steps")
        if steps[0] != 0 or steps[-1] >= self.total_steps:
            raise ConfigError(
                "must start at 0 and stay below total_steps", field="sampler_steps"
            )
        for arr in (betas, alpha_bars, steps):
            arr.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "sampler_steps", steps)
        object.__setattr__(
            self, "_positions", {int(t): i for i, t in enumerate(steps)}
        )

    @property
    def num_sampler_steps(self):
        return int(self.sampler_steps.shape[0])

    def alpha_bar(self, t):
        """``alpha_bar`` at training index ``t``; ``t = -1`` gives 1."""
        t = int(t)
        if t == -1:
            return 1.0
        if not 0 <= t < self.total_steps:
            raise IndexError(f"timestep {t} outside [-1, {self.total_steps})")
        return float(self.alpha_bars[t])

    def reverse_steps(self):
        """Pairs ``(t, t_prev)`` in sampling order, ending with ``(0, -1)``."""
        steps = self.sampler_steps[::-1]
        prev = np.append(steps[1:], -1)
        return [(int(t), int(p)) for t, p in zip(steps, prev)]

    def position(self, t):
        """Index of training step ``t`` within the sampler grid.

        The noisiest sampler step has position ``S - 1`` and step 0 has
        position 0, so a position counts the reverse steps still to go.
        """
        try:
            return self._positions[int(t)]
        except KeyError:
            raise IndexError(f"timestep {t} is not on the sampler grid") from None

    def previous(self, t):
        """Sampler-grid step that follows ``t`` in the reverse direction."""
        pos = self.position(t)
        return -1 if pos == 0 else int(self.sampler_steps[pos - 1])

    def summary(self):
        return {
            "total_steps": self.total_steps,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
            "sampler_steps": self.num_sampler_steps,
        }


def build_linear_schedule(
    total_steps=DEFAULT_TOTAL_STEPS,
    beta_start=DEFAULT_BETA_START,
    beta_end=DEFAULT_BETA_END,
    sampler_step_count=DEFAULT_SAMPLER_STEPS,
):
    """Linear beta schedule with a uniform-stride sampler grid.

    Parameters
    ----------
    total_steps : int
        Number of training-grid steps ``T``.
    beta_start, beta_end : float
        First and last beta, ``0 < beta_start <= beta_end < 1``.
    sampler_step_count : int
        Number ``S`` of steps visited by the sampler, ``1 <= S <= T``.

    Returns
    -------
    NoiseSchedule
    """
    total_steps = check_int(total_steps, "total_steps", minimum=1)
    sampler_step_count = check_int(
        sampler_step_count, "sampler_steps", minimum=1, maximum=total_steps
    )
    beta_start = check_real(beta_start, "beta_start", low=0.0, high=1.0,
                            low_open=True, high_open=True)
    beta_end = check_real(beta_end, "beta_end", low=0.0, high=1.0,
                          low_open=True, high_open=True)
    if beta_start > beta_end:
        raise ConfigError(
            f"must be >= beta_start ({beta_start}), got {beta_end}", field="beta_end"
        )
    betas = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    stride = total_steps // sampler_step_count
    steps = np.arange(sampler_step_count, dtype=np.int64) * stride
    return NoiseSchedule(total_steps, betas, steps)


def forward_noise(x0, t, eps, sched):
    """Diffuse clean data to step ``t``: ``sqrt(ab) x0 + sqrt(1 - ab) eps``.

    Works on single vectors or on batches; ``eps`` must match ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    check_same_shape(x0, eps, ("x0", "eps"))
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def sigma_at(t, sched):
    """Noise scale ``sqrt(1 - alpha_bar_t)`` used to scale mode guidance."""
    return float(np.sqrt(1.0 - sched.alpha_bar(t)))
