import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.stats import norm

from exceptions import AxisError, DegenerateReferenceError, DistributionError, EmptyInputError, ToleranceError
from forecast.errors import member_errors
from models import (
    EnsembleForecast,
    ErrorSeries,
    GaussianDistribution,
    ScoreName,
    ScoreSeries,
    VerificationSeries,
)

logger = logging.getLogger(__name__)

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# Deterministic scores
# ---------------------------------------------------------------------------


def absolute_error(err: ErrorSeries) -> ScoreSeries:
    return ScoreSeries(axis=err.axis, values=np.abs(err.values), mask=err.mask, score_name=ScoreName.AE)


def shifted_absolute_error(err: ErrorSeries, tolerance: float) -> ScoreSeries:
    """tolerance - |error|. Positive is acceptable; the limit is where this turns negative."""
    if not math.isfinite(tolerance) or tolerance < 0:
        raise ToleranceError(f"Tolerance must be a finite value >= 0, got {tolerance}")
    return ScoreSeries(
        axis=err.axis,
        values=tolerance - np.abs(err.values),
        mask=err.mask,
        score_name=ScoreName.SHIFTED_AE,
    )


def mean_absolute_error(errs: Sequence[ErrorSeries]) -> ScoreSeries:
    """Lead-wise mean of |error| over the rows present at that lead."""
    if len(errs) == 0:
        raise EmptyInputError("mean_absolute_error needs at least one error series")
    axis = errs[0].axis
    for err in errs[1:]:
        axis.require_same(err.axis)

    abs_values = np.abs(np.stack([e.values for e in errs]))
    present = ~np.stack([e.mask for e in errs])
    counts = present.sum(axis=0)
    totals = np.where(present, abs_values, 0.0).sum(axis=0)
    missing = counts == 0
    values = np.divide(totals, counts, out=np.zeros_like(totals), where=~missing)
    return ScoreSeries(axis=axis, values=values, mask=missing, score_name=ScoreName.MAE)


# ---------------------------------------------------------------------------
# Probabilistic scores
# ---------------------------------------------------------------------------


def crps_ensemble(members: Sequence[float], observation: float) -> float:
    """CRPS of the empirical step CDF of `members` against the observation.

    Uses the energy form  mean|x_i - y| - 1/(2M^2) sum_ij |x_i - x_j|  with the double
    sum evaluated on sorted members, which is exact for a step CDF and needs no grid.
    """
    x = np.asarray(members, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInputError("CRPS needs at least one ensemble member")
    if not (np.all(np.isfinite(x)) and math.isfinite(observation)):
        raise DistributionError("CRPS inputs must be finite")

    # centring on the observation keeps an ensemble collapsed onto it exactly at 0
    d = np.sort(x) - observation
    m = d.size
    spread = np.dot(2.0 * np.arange(m) - m + 1.0, d) / (m * m)
    return max(float(np.mean(np.abs(d)) - spread), 0.0)


def crps_gaussian(dist: GaussianDistribution, observation: float) -> float:
    """Closed-form CRPS of N(mean, std^2) at the observation."""
    if not dist.std > 0:
        raise DistributionError(f"Gaussian std must be > 0, got {dist.std}")
    z = (observation - dist.mean) / dist.std
    return float(dist.std * (z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z) - _INV_SQRT_PI))


def expected_absolute_error(dist: GaussianDistribution, observation: float) -> float:
    """E|X - y| for X ~ N(mean, std^2); the MAE of a Gaussian reference."""
    if not dist.std > 0:
        raise DistributionError(f"Gaussian std must be > 0, got {dist.std}")
    z = (observation - dist.mean) / dist.std
    return float(dist.std * (z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z)))


def ensemble_crps(forecast: EnsembleForecast, verification: VerificationSeries) -> ScoreSeries:
    forecast.axis.require_same(verification.axis)
    values = np.zeros(forecast.axis.length)
    for i in np.flatnonzero(verification.present):
        values[i] = crps_ensemble(forecast.members[:, i], float(verification.values[i]))
    return ScoreSeries(axis=forecast.axis, values=values, mask=verification.mask, score_name=ScoreName.CRPS)


def gaussian_crps(distributions: Sequence[GaussianDistribution], verification: VerificationSeries) -> ScoreSeries:
    """CRPS of a parametric Gaussian forecast, one distribution per lead."""
    if len(distributions) != verification.axis.length:
        raise AxisError(f"{len(distributions)} distributions for {verification.axis.length} leads")
    values = np.zeros(verification.axis.length)
    for i in np.flatnonzero(verification.present):
        values[i] = crps_gaussian(distributions[i], float(verification.values[i]))
    return ScoreSeries(axis=verification.axis, values=values, mask=verification.mask, score_name=ScoreName.CRPS)


def member_crps(forecast: EnsembleForecast, verification: VerificationSeries) -> List[ScoreSeries]:
    """CRPS of every member taken as a one-member ensemble, i.e. its absolute error."""
    return [
        ScoreSeries(axis=err.axis, values=np.abs(err.values), mask=err.mask, score_name=ScoreName.CRPS)
        for err in member_errors(forecast, verification)
    ]


# ---------------------------------------------------------------------------
# Skill scores
# ---------------------------------------------------------------------------


def _skill(forecast: ScoreSeries, reference: ScoreSeries, name: ScoreName) -> ScoreSeries:
    forecast.axis.require_same(reference.axis)
    missing = forecast.mask | reference.mask
    f = np.where(missing, 0.0, forecast.values)
    r = np.where(missing, 0.0, reference.values)

    degenerate = ~missing & (r == 0) & (f > 0)
    if np.any(degenerate):
        lead = int(np.flatnonzero(degenerate)[0]) + 1
        raise DegenerateReferenceError(
            f"Reference {reference.score_name.value} is 0 at lead {lead} while the forecast score is {f[lead - 1]}"
        )

    ratio = np.zeros_like(f)
    np.divide(f, r, out=ratio, where=~missing & (r != 0))
    values = np.where(missing, 0.0, 1.0 - ratio)
    return ScoreSeries(axis=forecast.axis, values=values, mask=missing, score_name=name)


def crpss(crps_forecast: ScoreSeries, crps_reference: ScoreSeries) -> ScoreSeries:
    """1 - CRPS_forecast / CRPS_reference per lead. 0/0 counts as perfect skill (1)."""
    return _skill(crps_forecast, crps_reference, ScoreName.CRPSS)


def mae_skill_score(mae_forecast: ScoreSeries, mae_reference: ScoreSeries) -> ScoreSeries:
    return _skill(mae_forecast, mae_reference, ScoreName.MAESS)
