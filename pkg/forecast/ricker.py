"""Stochastic Ricker ensemble with Monte Carlo propagation of initial-condition and
parameter uncertainty.

Every member draws from its own RNG stream keyed by (seed, stream, init_time, member),
so any subset of members reproduces the matching rows of a larger run.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from config import RICKER_APPENDIX_PRESET, RICKER_STEP_LABEL
from exceptions import ParameterError
from models import EnsembleForecast, RickerConfig, TimeAxis, VerificationKind, VerificationSeries

logger = logging.getLogger(__name__)

MEMBER_STREAM = 0
TRUTH_STREAM = 1
SATURATION_STREAM = 2


def ricker_step(y, alpha, k):
    """y * exp(alpha * (1 - y / k)); works elementwise on arrays."""
    if np.any(np.asarray(k) <= 0):
        raise ParameterError(f"Carrying capacity must be > 0, got {k}")
    if np.any(np.asarray(y) < 0):
        raise ParameterError(f"Population size must be >= 0, got {y}")
    return y * np.exp(alpha * (1.0 - y / k))


def preset(name: str, **overrides) -> RickerConfig:
    if name == "default":
        return RickerConfig(**overrides)
    if name == "appendix":
        return RickerConfig(**{**RICKER_APPENDIX_PRESET, **overrides})
    raise ParameterError(f"Unknown Ricker preset {name!r} (expected 'default' or 'appendix')")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _redraw(rng: np.random.Generator, value: float, mean: float, sd: float, positive: bool) -> float:
    """Reject-and-resample a single Gaussian draw until it is admissible."""
    while (value <= 0) if positive else (value < 0):
        value = rng.normal(mean, sd)
    return value


def _parameters(rng: np.random.Generator, cfg: RickerConfig, steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-step growth rates and carrying capacities; k must stay positive."""
    alpha_sd, k_sd = cfg.param_cv * abs(cfg.alpha_mean), cfg.param_cv * cfg.k_mean
    draws = rng.normal(loc=[cfg.alpha_mean, cfg.k_mean], scale=[alpha_sd, k_sd], size=(steps, 2))
    for t in np.flatnonzero(draws[:, 1] <= 0):
        draws[t, 1] = _redraw(rng, draws[t, 1], cfg.k_mean, k_sd, positive=True)
    if cfg.alpha_mean > 0:
        for t in np.flatnonzero(draws[:, 0] <= 0):
            draws[t, 0] = _redraw(rng, draws[t, 0], cfg.alpha_mean, alpha_sd, positive=True)
    return draws[:, 0], draws[:, 1]


def simulate_ensemble(
    cfg: RickerConfig,
    init_time: int = 0,
    init_value: Optional[float] = None,
    horizon: Optional[int] = None,
    stream: int = MEMBER_STREAM,
) -> EnsembleForecast:
    """M trajectories of `horizon` generations starting from a perturbed initial value."""
    horizon = horizon or cfg.horizon
    y_init = cfg.init_value if init_value is None else init_value
    if y_init < 0:
        raise ParameterError(f"Initial value must be >= 0, got {y_init}")
    init_sd = cfg.init_cv * y_init

    m = cfg.member_count
    y0 = np.empty(m)
    alphas = np.empty((m, horizon))
    ks = np.empty((m, horizon))
    noise = np.zeros((m, horizon))
    for member in range(m):
        rng = _stream(cfg.seed, stream, init_time, member)
        y0[member] = _redraw(rng, rng.normal(y_init, init_sd), y_init, init_sd, positive=False)
        alphas[member], ks[member] = _parameters(rng, cfg, horizon)
        if cfg.process_noise_sd > 0:
            noise[member] = rng.normal(0.0, cfg.process_noise_sd, size=horizon)

    trajectories = np.empty((m, horizon))
    floored = 0
    y = y0
    for t in range(horizon):
        y = ricker_step(y, alphas[:, t], ks[:, t]) + noise[:, t]
        negative = y < 0
        if np.any(negative):
            floored += int(negative.sum())
            y = np.where(negative, 0.0, y)
        trajectories[:, t] = y

    if floored:
        logger.warning(f"Process noise pushed {floored} states below 0; floored at 0")
    logger.info(f"Simulated Ricker ensemble: {m} members x {horizon} generations (init_time={init_time}, stream={stream})")
    return EnsembleForecast(
        axis=TimeAxis(t0=init_time, step=RICKER_STEP_LABEL, length=horizon),
        members=trajectories,
        floored_cells=floored,
    )


def simulate_truth(cfg: RickerConfig, truth_seed: int, length: Optional[int] = None) -> VerificationSeries:
    """One realised trajectory without process error.

    Parameters are drawn step by step, so a longer run has a shorter one as its exact prefix.
    """
    length = length or cfg.horizon
    rng = _stream(truth_seed, TRUTH_STREAM)
    alpha_sd, k_sd = cfg.param_cv * abs(cfg.alpha_mean), cfg.param_cv * cfg.k_mean

    values = np.empty(length)
    y = cfg.init_value
    for t in range(length):
        alpha, k = rng.normal(loc=[cfg.alpha_mean, cfg.k_mean], scale=[alpha_sd, k_sd])
        k = _redraw(rng, k, cfg.k_mean, k_sd, positive=True)
        if cfg.alpha_mean > 0:
            alpha = _redraw(rng, alpha, cfg.alpha_mean, alpha_sd, positive=True)
        y = float(ricker_step(y, alpha, k))
        values[t] = y

    logger.info(f"Simulated Ricker truth: {length} generations (truth_seed={truth_seed})")
    return VerificationSeries(
        axis=TimeAxis(t0=0, step=RICKER_STEP_LABEL, length=length),
        values=values,
        kind=VerificationKind.SIMULATED,
    )
