"""Reverse-process sampling with classifier-free and mode guidance.

One reverse step at training index ``t``:

1. query the oracle for conditional and unconditional noise and blend them
   with classifier-free guidance into ``eps_tilde``;
2. predict clean data ``x0_hat`` from ``eps_tilde`` and form the mode
   guidance ``g = m - x0_hat``;
3. while the step is at or above ``t_stop`` on the sampler grid, shift the
   noise to ``eps_hat = eps_tilde - lam * sigma_t * g`` (``sigma_t =
   sqrt(1 - ab_t)``), otherwise keep ``eps_hat = eps_tilde``;
4. advance with a DDPM or DDIM update.

Subtracting ``lam * sigma_t * g`` moves the implied ``x0_hat`` towards the
mode by ``lam * (1 - ab_t) / sqrt(ab_t) * g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_int, check_random_state, check_real, check_same_shape
from .exceptions import ConfigError, DivergenceError, SingularityError

SAMPLERS = ("ddpm", "ddim")
SIGMA_KINDS = ("alpha_bar", "beta")
GUIDANCE_SIGNS = ("subtract", "add")


@dataclass(frozen=True)
class GuidanceConfig:
    """Sampling hyper-parameters.

    Attributes
    ----------
    lambda_ : float
        Mode guidance strength, ``>= 0``.
    t_stop : int
        Sampler-grid position below which guidance is off. With ``S``
        sampler steps, ``t_stop = S`` disables guidance and ``t_stop = 0``
        guides every step.
    cfg_scale : float
        Classifier-free guidance weight ``w``; 1 is plain conditional
        sampling, 0 is unconditional.
    sampler : {"ddpm", "ddim"}
    ddim_eta : float
        DDIM stochasticity in [0, 1]; ignored by DDPM.
    sigma_kind : {"alpha_bar", "beta"}
        Guidance scale: ``sqrt(1 - ab_t)`` (default) or ``sqrt(beta_t)``.
    guidance_sign : {"subtract", "add"}
        ``"add"`` flips the guidance term for side-by-side study; it pushes
        ``x0_hat`` away from the mode.
    """

    lambda_: float = 0.1
    t_stop: int = 25
    cfg_scale: float = 4.0
    sampler: str = "ddpm"
    ddim_eta: float = 0.0
    sigma_kind: str = "alpha_bar"
    guidance_sign: str = "subtract"

    def __post_init__(self):
        check_real(self.lambda_, "lambda", low=0.0)
        check_int(self.t_stop, "t_stop", minimum=0)
        check_real(self.cfg_scale, "cfg_scale", low=0.0)
        check_real(self.ddim_eta, "eta", low=0.0, high=1.0)
        for name, value, allowed in (
            ("sampler", self.sampler, SAMPLERS),
            ("sigma_kind", self.sigma_kind, SIGMA_KINDS),
            ("guidance_sign", self.guidance_sign, GUIDANCE_SIGNS),
        ):
            if value not in allowed:
                raise ConfigError(f"must be one of {allowed}, got {value!r}", field=name)

    def replace(self, **changes):
        return replace(self, **changes)

    def validate_for(self, sched):
        if self.t_stop > sched.num_sampler_steps:
            raise ConfigError(
                f"must be <= sampler steps ({sched.num_sampler_steps}), got {self.t_stop}",
                field="t_stop",
            )
        return self

    def to_dict(self):
        return {
            "lambda": self.lambda_,
            "t_stop": self.t_stop,
            "cfg_scale": self.cfg_scale,
            "sampler": self.sampler,
            "eta": self.ddim_eta,
            "sigma_kind": self.sigma_kind,
            "guidance_sign": self.guidance_sign,
        }


@dataclass
class Trajectory:
    """Per-step record of one reverse run.

    ``guidance[i]`` is NaN where guidance was inactive (see ``active``).
    """

    steps: np.ndarray
    states: np.ndarray
    x0_hats: np.ndarray
    guidance: np.ndarray
    active: np.ndarray = field(init=False)

    def __post_init__(self):
        self.active = ~np.isnan(self.guidance).any(axis=1)

    def __len__(self):
        return len(self.steps)

    def records(self):
        """Yield ``(t, x_t, x0_hat, g_t or None)`` in sampling order."""
        for t, x, x0, g, on in zip(self.steps, self.states, self.x0_hats,
                                   self.guidance, self.active):
            yield int(t), x, x0, (g if on else None)


def predict_x0(x_t, eps_hat, t, sched):
    """Clean-data estimate ``(x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)``."""
    ab = sched.alpha_bar(t)
    if ab <= 0.0:
        raise SingularityError(f"alpha_bar is zero at step {t}")
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def cfg_combine(eps_cond, eps_uncond, w):
    """Classifier-free guidance ``eps_uncond + w (eps_cond - eps_uncond)``."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    check_same_shape(eps_cond, eps_uncond, ("eps_cond", "eps_uncond"))
    if w == 1.0:
        return eps_cond.copy()
    if w == 0.0:
        return eps_uncond.copy()
    return eps_uncond + w * (eps_cond - eps_uncond)


def guidance_active(t, cfg, sched):
    """True if mode guidance applies at training step ``t``."""
    return sched.position(t) >= cfg.t_stop


def _guidance_scale(t, cfg, sched):
    if cfg.sigma_kind == "beta":
        return float(np.sqrt(sched.betas[t]))
    return float(np.sqrt(1.0 - sched.alpha_bar(t)))


def mode_guidance_apply(eps_tilde, x_t, t, mode, cfg, sched):
    """Steer the noise prediction towards ``mode``.

    Returns
    -------
    eps_hat : ndarray
        Guided noise; equal to ``eps_tilde`` once below ``t_stop``.
    g : ndarray or None
        ``mode - x0_hat`` at this step, or ``None`` when inactive.
    """
    eps_tilde = np.asarray(eps_tilde, dtype=np.float64)
    if not guidance_active(t, cfg, sched):
        return eps_tilde, None
    g = np.asarray(mode, dtype=np.float64) - predict_x0(x_t, eps_tilde, t, sched)
    shift = cfg.lambda_ * _guidance_scale(t, cfg, sched) * g
    if cfg.guidance_sign == "add":
        return eps_tilde + shift, g
    return eps_tilde - shift, g


def ddpm_step(x_t, eps_hat, t, sched, rng=None, t_prev=None, noise=None):
    """Ancestral DDPM update from ``t`` to ``t_prev``.

    Over a strided grid the per-step ``beta`` is the effective
    ``1 - ab_t / ab_prev``, which reduces to ``beta_t`` for unit stride.
    No noise is added on the final step (``t_prev == -1``). ``noise``
    overrides the draw from ``rng``.
    """
    if t_prev is None:
        t_prev = sched.previous(t)
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    beta = 1.0 - ab_t / ab_prev
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = (x_t - beta / np.sqrt(1.0 - ab_t) * np.asarray(eps_hat)) / np.sqrt(1.0 - beta)
    if t_prev == -1:
        return mean
    if noise is None:
        noise = check_random_state(rng).standard_normal(x_t.shape)
    return mean + np.sqrt(beta) * noise


def ddim_step(x_t, eps_hat, t, t_prev, sched, eta=0.0, rng=None, noise=None):
    """DDIM update ``sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev - s^2) eps_hat + s z``.

    With ``eta = 0`` the update is deterministic and ``s = 0``.
    """
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    x0_hat = predict_x0(x_t, eps_hat, t, sched)
    if eta == 0.0 or t_prev == -1:
        return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    s = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev))
    if noise is None:
        noise = check_random_state(rng).standard_normal(eps_hat.shape)
    direction = np.sqrt(max(1.0 - ab_prev - s * s, 0.0))
    return np.sqrt(ab_prev) * x0_hat + direction * eps_hat + s * noise


def _draws_noise(cfg):
    return cfg.sampler == "ddpm" or cfg.ddim_eta > 0.0


def reverse_process(oracle, cls, modes, cfg, sched, rngs, *, x_start=None,
                    t_start=None, record=True):
    """Run a batch of reverse trajectories, one random stream per row.

    Parameters
    ----------
    oracle : EpsilonOracle
    cls : class id or None
    modes : ndarray of shape (n, d) or None
        Target mode per row; ``None`` disables mode guidance.
    rngs : list of numpy Generators
        One per row. Each stream first yields ``x_T`` (unless ``x_start``
        is given) and then one noise vector per stochastic step, so rows
        are reproducible independently of batch composition.
    x_start, t_start : optional
        Resume from state ``x_start`` at sampler step ``t_start``.

    Returns
    -------
    final : ndarray of shape (n, d)
    trajectories : list of Trajectory or None
    """
    cfg.validate_for(sched)
    n = len(rngs)
    if x_start is None:
        dim = np.shape(modes)[1] if modes is not None else oracle.dim
        x = np.stack([rng.standard_normal(dim) for rng in rngs])
    else:
        x = np.array(x_start, dtype=np.float64).reshape(n, -1)
    dim = x.shape[1]
    if modes is not None:
        modes = np.asarray(modes, dtype=np.float64).reshape(n, dim)

    pairs = sched.reverse_steps()
    if t_start is not None:
        pos = [t for t, _ in pairs].index(int(t_start))
        pairs = pairs[pos:]
    rec_steps, rec_x, rec_x0, rec_g = [], [], [], []
    for t, t_prev in pairs:
        eps_c = oracle(x, t, cls)
        if cls is None or cfg.cfg_scale == 1.0:
            eps_tilde = eps_c
        else:
            eps_tilde = cfg_combine(eps_c, oracle(x, t, None), cfg.cfg_scale)
        if modes is None:
            eps_hat, g = eps_tilde, None
        else:
            eps_hat, g = mode_guidance_apply(eps_tilde, x, t, modes, cfg, sched)
        if record:
            rec_steps.append(t)
            rec_x.append(x)
            rec_x0.append(predict_x0(x, eps_tilde, t, sched))
            rec_g.append(np.full_like(x, np.nan) if g is None else g)
        noise = None
        if t_prev != -1 and _draws_noise(cfg):
            noise = np.stack([rng.standard_normal(dim) for rng in rngs])
        if cfg.sampler == "ddpm":
            x = ddpm_step(x, eps_hat, t, sched, t_prev=t_prev, noise=noise)
        else:
            x = ddim_step(x, eps_hat, t, t_prev, sched, eta=cfg.ddim_eta, noise=noise)
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            rows = np.flatnonzero(bad).tolist()
            raise DivergenceError(
                f"non-finite state after step t={t} in rows {rows}", step=t
            )
    if not record:
        return x, None
    steps = np.array(rec_steps, dtype=np.int64)
    states, x0s, gs = (np.stack(a, axis=1) for a in (rec_x, rec_x0, rec_g))
    trajs = [Trajectory(steps, states[i], x0s[i], gs[i]) for i in range(n)]
    return x, trajs


def sample_guided(oracle, cls, mode, cfg, sched, rng=None):
    """Draw one sample steered towards ``mode`` (``None`` for unguided).

    Returns
    -------
    x0 : ndarray of shape (d,)
    trajectory : Trajectory
    """
    rng = check_random_state(rng)
    modes = None if mode is None else np.asarray(mode, dtype=np.float64)[None, :]
    final, trajs = reverse_process(oracle, cls, modes, cfg, sched, [rng])
    return final[0], trajs[0]
