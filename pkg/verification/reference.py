import logging
import math
from typing import Callable, List

import numpy as np
import pandas as pd

from exceptions import (
    AxisError,
    BurnInError,
    CoverageError,
    DegenerateHistoryError,
    DistributionError,
    InsufficientHistoryError,
)
from models import (
    EnsembleForecast,
    ExternalScores,
    GaussianClimatology,
    GaussianDistribution,
    Persistence,
    PointForecast,
    ReferenceModel,
    SaturatedEnsemble,
    ScoreName,
    ScoreSeries,
    TimeAxis,
    VerificationSeries,
)
from verification.scoring import crps_ensemble, crps_gaussian, expected_absolute_error

logger = logging.getLogger(__name__)


def _sample_stats(values: np.ndarray) -> tuple:
    """Mean and Bessel-corrected std, independent of sample order."""
    ordered = np.sort(values)
    n = ordered.size
    mean = math.fsum(ordered) / n
    std = math.sqrt(math.fsum((ordered - mean) ** 2) / (n - 1))
    return mean, std


def climatology_from_history(history: VerificationSeries, cycle_length: int) -> GaussianClimatology:
    """Gaussian climatology per cycle position from a long verification history.

    Absolute index t falls on position t mod cycle_length, so a history that does not start
    at cycle position 0 says so through its axis t0. cycle_length=1 gives the long-term
    mean and standard deviation applied to every lead.
    """
    if cycle_length < 1:
        raise AxisError(f"cycle_length must be >= 1, got {cycle_length}")

    frame = pd.DataFrame({
        "position": (history.axis.t0 + history.axis.leads()) % cycle_length,
        "value": history.values,
    })[history.present]
    groups = {int(pos): grp["value"].to_numpy() for pos, grp in frame.groupby("position")}

    distributions: List[GaussianDistribution] = []
    for position in range(cycle_length):
        samples = groups.get(position, np.empty(0))
        if samples.size < 2:
            raise InsufficientHistoryError(position, int(samples.size))
        mean, std = _sample_stats(samples)
        if std == 0:
            raise DegenerateHistoryError(f"History at cycle position {position} has zero variance")
        distributions.append(GaussianDistribution(mean=mean, std=std))

    logger.info(f"Climatology from history: {cycle_length} cycle positions, {len(frame)} samples")
    return GaussianClimatology(cycle_length=cycle_length, distributions=distributions)


def climatology_from_saturation(model_runs: EnsembleForecast, burn_in: int) -> GaussianClimatology:
    """Constant Gaussian from all member values at leads after `burn_in`."""
    if burn_in < 0 or burn_in >= model_runs.axis.length:
        raise BurnInError(f"burn_in {burn_in} must lie in 0..{model_runs.axis.length - 1}")
    if model_runs.member_count < 2:
        raise DistributionError("Saturation climatology needs at least 2 members")

    block = model_runs.members[:, burn_in:].ravel()
    mean = float(np.mean(block))
    std = float(np.std(block, ddof=1))
    if std == 0:
        raise DegenerateHistoryError("Saturated ensemble has zero spread after burn-in")

    logger.info(f"Saturation climatology: mean={mean:.6f}, std={std:.6f} from {block.size} values after lead {burn_in}")
    return GaussianClimatology(cycle_length=1, distributions=[GaussianDistribution(mean=mean, std=std)])


def persistence_forecast(anchor: float, axis: TimeAxis) -> PointForecast:
    if not math.isfinite(anchor):
        raise DistributionError(f"Persistence anchor must be finite, got {anchor}")
    return PointForecast(axis=axis, values=np.full(axis.length, float(anchor)))


def _per_lead(
    ref: ReferenceModel,
    verification: VerificationSeries,
    score_name: ScoreName,
    gaussian: Callable[[GaussianDistribution, float], float],
    ensemble: Callable[[np.ndarray, float], float],
) -> ScoreSeries:
    axis = verification.axis

    if isinstance(ref, ExternalScores):
        if ref.scores.axis.length != axis.length:
            raise CoverageError(
                f"External reference scores cover {ref.scores.axis.length} leads, verification has {axis.length}"
            )
        return ref.scores

    if isinstance(ref, SaturatedEnsemble) and ref.ensemble.axis.length < axis.length:
        raise CoverageError(
            f"Saturated ensemble covers {ref.ensemble.axis.length} leads, verification has {axis.length}"
        )

    values = np.zeros(axis.length)
    for i in np.flatnonzero(verification.present):
        y = float(verification.values[i])
        if isinstance(ref, GaussianClimatology):
            values[i] = gaussian(ref.distribution_at(axis.absolute(i + 1)), y)
        elif isinstance(ref, SaturatedEnsemble):
            values[i] = ensemble(ref.ensemble.members[:, i], y)
        elif isinstance(ref, Persistence):
            values[i] = abs(ref.anchor - y)
        else:
            raise CoverageError(f"Unsupported reference model {type(ref).__name__}")
    return ScoreSeries(axis=axis, values=values, mask=verification.mask, score_name=score_name)


def reference_crps(ref: ReferenceModel, verification: VerificationSeries) -> ScoreSeries:
    """CRPS of the reference model at every verification lead."""
    return _per_lead(ref, verification, ScoreName.CRPS, crps_gaussian, crps_ensemble)


def reference_mae(ref: ReferenceModel, verification: VerificationSeries) -> ScoreSeries:
    """Mean absolute error of the reference model at every verification lead."""
    return _per_lead(
        ref,
        verification,
        ScoreName.MAE,
        expected_absolute_error,
        lambda members, y: float(np.mean(np.abs(members - y))),
    )
