"""Forecast-limit detection.

A limit is the first lead at which a score leaves its acceptable region. Missing
scores are skipped: they neither cross nor reset a limit. Leads are reported as
discrete indices.

Acceptability is closed on the tolerance (score <= rho, or skill >= 0), except for
the grouped stand-wise tolerance, which follows the neighbour-class rule
"violated once own error >= neighbour error".
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import (
    AxisError,
    CoverageError,
    DegenerateReferenceError,
    EmptyInputError,
    InputOrderError,
    OrientationError,
)
from models import (
    AggregateLimit,
    Aggregation,
    Direction,
    ErrorSeries,
    LimitDistribution,
    LimitKind,
    LimitResult,
    LimitStatus,
    ScoreName,
    ScoreSeries,
    TimeAxis,
    ToleranceSpec,
    VerificationKind,
)

logger = logging.getLogger(__name__)

_SKILL_OF = {
    ScoreName.CRPS: ScoreName.CRPSS,
    ScoreName.MAE: ScoreName.MAESS,
    ScoreName.AE: ScoreName.MAESS,
}


def relative_kind(verification_kind: Optional[VerificationKind]) -> LimitKind:
    """Relative limits against a simulated verification are potential limits."""
    if verification_kind == VerificationKind.SIMULATED:
        return LimitKind.POTENTIAL
    return LimitKind.RELATIVE


def absolute_kind(verification_kind: Optional[VerificationKind]) -> LimitKind:
    """Tolerance limits against a simulated verification are potential limits too."""
    if verification_kind == VerificationKind.SIMULATED:
        return LimitKind.POTENTIAL
    return LimitKind.ABSOLUTE


def _scan(acceptable: np.ndarray, evaluated: np.ndarray) -> Tuple[LimitStatus, Optional[int], List[Tuple[int, int]]]:
    """First failing lead over the evaluated leads, plus every run of acceptable leads."""
    status, lead = LimitStatus.NOT_REACHED, None
    intervals: List[Tuple[int, int]] = []
    run_start = run_end = None
    first_evaluated = True

    for i in np.flatnonzero(evaluated):
        current = int(i) + 1
        if acceptable[i]:
            if run_start is None:
                run_start = current
            run_end = current
        else:
            if run_start is not None:
                intervals.append((run_start, run_end))
                run_start = None
            if status == LimitStatus.NOT_REACHED and lead is None:
                status = LimitStatus.NEVER_ACCEPTABLE if first_evaluated else LimitStatus.CROSSED
                lead = current
        first_evaluated = False

    if run_start is not None:
        intervals.append((run_start, run_end))
    if status == LimitStatus.NEVER_ACCEPTABLE:
        lead = None
    return status, lead, intervals


def _build(
    axis: TimeAxis,
    scan: Tuple[LimitStatus, Optional[int], List[Tuple[int, int]]],
    score_name: ScoreName,
    tol: ToleranceSpec,
    limit_kind: LimitKind,
    verification_kind: Optional[VerificationKind],
) -> LimitResult:
    status, lead, intervals = scan
    return LimitResult(
        status=status,
        lead=lead,
        time=axis.t0 + lead if lead is not None else None,
        max_lead=axis.length,
        score_name=score_name,
        tolerance=tol,
        limit_kind=limit_kind,
        verification_kind=verification_kind,
        acceptable_intervals=intervals,
    )


def _acceptable(values: np.ndarray, thresholds: np.ndarray, direction: Direction) -> np.ndarray:
    if direction == Direction.SCORE_AT_MOST:
        return values <= thresholds
    return values >= thresholds


def detect_limit(
    score: ScoreSeries,
    tol: ToleranceSpec,
    limit_kind: LimitKind = LimitKind.ABSOLUTE,
    verification_kind: Optional[VerificationKind] = None,
    group: Optional[str] = None,
) -> LimitResult:
    """First lead where the score violates the tolerance (the first 1 of the step function)."""
    if tol.direction != score.orientation:
        raise OrientationError(
            f"{score.score_name.value} is judged {score.orientation.value}, tolerance says {tol.direction.value}"
        )
    thresholds = tol.thresholds(score.axis.length, group=group)
    evaluated = score.present & ~np.isnan(thresholds)
    acceptable = _acceptable(score.values, thresholds, tol.direction)
    return _build(score.axis, _scan(acceptable, evaluated), score.score_name, tol, limit_kind, verification_kind)


def relative_limit(
    score_forecast: ScoreSeries,
    score_reference: ScoreSeries,
    verification_kind: Optional[VerificationKind] = VerificationKind.OBSERVED,
) -> LimitResult:
    """First lead where the forecast scores worse than the reference (skill 1 - S/S_ref < 0)."""
    score_forecast.axis.require_same(score_reference.axis)
    if score_forecast.orientation != Direction.SCORE_AT_MOST:
        raise OrientationError(f"Relative limits compare error scores, got {score_forecast.score_name.value}")

    evaluated = score_forecast.present & score_reference.present
    f, r = score_forecast.values, score_reference.values
    degenerate = evaluated & (r == 0) & (f > 0)
    if np.any(degenerate):
        lead = int(np.flatnonzero(degenerate)[0]) + 1
        raise DegenerateReferenceError(f"Reference score is 0 at lead {lead} while the forecast score is positive")

    # skill >= 0  <=>  f <= r for r > 0; exact comparison keeps ties and rescaling stable
    acceptable = f <= r
    tol = ToleranceSpec.scalar(0.0, Direction.SCORE_AT_LEAST)
    skill_name = _SKILL_OF.get(score_forecast.score_name, score_forecast.score_name)
    return _build(
        score_forecast.axis,
        _scan(acceptable, evaluated),
        skill_name,
        tol,
        relative_kind(verification_kind),
        verification_kind,
    )


def limit_distribution(results: Sequence[LimitResult]) -> LimitDistribution:
    """Mean, median, quartiles and sample std over the Crossed results; the rest are counted."""
    results = list(results)
    leads = np.array([r.lead for r in results if r.status == LimitStatus.CROSSED], dtype=float)
    not_reached = sum(1 for r in results if r.status == LimitStatus.NOT_REACHED)
    never = sum(1 for r in results if r.status == LimitStatus.NEVER_ACCEPTABLE)
    if leads.size == 0:
        return LimitDistribution(per_member_limits=results, not_reached_count=not_reached, never_acceptable_count=never)

    q25, median, q75 = np.quantile(leads, [0.25, 0.5, 0.75], method="linear")
    return LimitDistribution(
        per_member_limits=results,
        mean=float(np.mean(leads)),
        median=float(median),
        q25=float(q25),
        q75=float(q75),
        std=float(np.std(leads, ddof=1)) if leads.size > 1 else 0.0,
        not_reached_count=not_reached,
        never_acceptable_count=never,
    )


def member_limit_distribution(
    per_member_scores: Sequence[ScoreSeries],
    tol: ToleranceSpec,
    limit_kind: LimitKind = LimitKind.ABSOLUTE,
    verification_kind: Optional[VerificationKind] = None,
) -> LimitDistribution:
    """Limit of every member and summary statistics over the members that crossed."""
    if len(per_member_scores) == 0:
        raise EmptyInputError("member_limit_distribution needs at least one member")
    results = [detect_limit(s, tol, limit_kind, verification_kind) for s in per_member_scores]
    dist = limit_distribution(results)
    if dist.not_reached_count:
        logger.info(f"{dist.not_reached_count} of {len(results)} members never reached their limit, excluded from statistics")
    return dist


def tolerance_curve(score: ScoreSeries, tolerances: Sequence[float]) -> List[Tuple[float, LimitResult]]:
    """Limit as a function of the tolerance; nondecreasing in rho."""
    if score.orientation != Direction.SCORE_AT_MOST:
        raise OrientationError(f"Tolerance curves need an error score, got {score.score_name.value}")
    rhos = [float(r) for r in tolerances]
    if any(not math.isfinite(r) for r in rhos):
        raise InputOrderError("Tolerances must be finite")
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise InputOrderError("Tolerances must be strictly ascending")
    return [(rho, detect_limit(score, ToleranceSpec.scalar(rho))) for rho in rhos]


def limit_of_mean_score(
    per_init_scores: Sequence[ScoreSeries],
    statistic: Aggregation = Aggregation.MEAN,
    verification_kind: Optional[VerificationKind] = None,
) -> AggregateLimit:
    """Aggregate skill over initialisation times lead by lead, then find where it drops below 0.

    The spread is one standard deviation across initialisations; bands are mean +/- sd for
    the mean and the quartiles for the median.
    """
    if len(per_init_scores) == 0:
        raise EmptyInputError("limit_of_mean_score needs at least one initialisation")
    if statistic == Aggregation.BOTH:
        raise AxisError("Aggregate one statistic at a time")
    first = per_init_scores[0]
    if first.orientation != Direction.SCORE_AT_LEAST:
        raise OrientationError(f"Lead-time aggregation is judged on skill, got {first.score_name.value}")
    length = first.axis.length
    if any(s.axis.length != length for s in per_init_scores):
        raise AxisError("All initialisations must share the lead-axis length")

    stack = np.stack([s.as_float() for s in per_init_scores])
    counts = np.sum(~np.isnan(stack), axis=0)
    missing = counts == 0
    filled = np.where(missing[np.newaxis, :], 0.0, stack)

    spread = np.nanstd(filled, axis=0)
    if statistic == Aggregation.MEAN:
        centre = np.nanmean(filled, axis=0)
        lower, upper = centre - spread, centre + spread
    else:
        lower, centre, upper = np.nanquantile(filled, [0.25, 0.5, 0.75], axis=0, method="linear")

    name = first.score_name
    if name in (ScoreName.CRPSS, ScoreName.MAESS):
        upper = np.minimum(upper, 1.0)
    axis = TimeAxis(t0=0, step=first.axis.step, length=length)
    kind = relative_kind(verification_kind)
    tol = ToleranceSpec.scalar(0.0, Direction.SCORE_AT_LEAST)

    def series(values: np.ndarray) -> ScoreSeries:
        return ScoreSeries(axis=axis, values=np.where(missing, 0.0, values), mask=missing, score_name=name)

    aggregate, lower_s, upper_s = series(centre), series(lower), series(upper)
    return AggregateLimit(
        statistic=statistic,
        aggregate=aggregate,
        spread=np.where(missing, 0.0, spread),
        lower=lower_s,
        upper=upper_s,
        limit=detect_limit(aggregate, tol, kind, verification_kind),
        lower_limit=detect_limit(lower_s, tol, kind, verification_kind),
        upper_limit=detect_limit(upper_s, tol, kind, verification_kind),
    )


# ---------------------------------------------------------------------------
# Grouped (stand-wise) tolerance
# ---------------------------------------------------------------------------


NeighborErrors = Union[ErrorSeries, Sequence[ErrorSeries]]


def _stand_tolerance(stand: str, own: ErrorSeries, neighbors: NeighborErrors) -> Tuple[np.ndarray, np.ndarray]:
    """|own error| and the per-lead tolerance: the smaller neighbour-class error."""
    if isinstance(neighbors, ErrorSeries):
        neighbors = [neighbors]
    if len(neighbors) == 0:
        raise CoverageError(f"Stand {stand} has no neighbour-class error series")
    for nb in neighbors:
        own.axis.require_same(nb.axis)

    stacked = np.abs(np.stack([nb.as_float() for nb in neighbors]))
    all_missing = np.all(np.isnan(stacked), axis=0)
    tol = np.full(own.axis.length, np.nan)
    tol[~all_missing] = np.nanmin(stacked[:, ~all_missing], axis=0)
    return np.abs(own.as_float()), tol


def _require_stands(errors_by_stand: Dict[str, ErrorSeries], neighbor_errors: Dict[str, NeighborErrors]) -> None:
    for stand in errors_by_stand:
        if stand not in neighbor_errors:
            raise CoverageError(f"Stand {stand} has no neighbour-class error series")
    for stand in neighbor_errors:
        if stand not in errors_by_stand:
            raise CoverageError(f"Stand {stand} has no own-class error series")


def stand_limit(stand: str, own: ErrorSeries, neighbors: NeighborErrors) -> LimitResult:
    error, tol = _stand_tolerance(stand, own, neighbors)
    evaluated = ~np.isnan(error) & ~np.isnan(tol)
    acceptable = np.zeros_like(evaluated)
    acceptable[evaluated] = error[evaluated] < tol[evaluated]
    spec = ToleranceSpec.per_lead_values(tol)
    return _build(own.axis, _scan(acceptable, evaluated), ScoreName.AE, spec, LimitKind.ABSOLUTE, None)


def grouped_limit(
    errors_by_stand: Dict[str, ErrorSeries],
    neighbor_errors: Dict[str, NeighborErrors],
    groups: Dict[str, str],
) -> Dict[str, LimitDistribution]:
    """Stand limits against neighbour-class tolerances, summarised per group key."""
    _require_stands(errors_by_stand, neighbor_errors)
    per_group: Dict[str, List[LimitResult]] = {}
    for stand in sorted(errors_by_stand):
        if stand not in groups:
            raise CoverageError(f"Stand {stand} has no group key")
        result = stand_limit(stand, errors_by_stand[stand], neighbor_errors[stand])
        logger.info(f"Stand {stand} (group {groups[stand]}): {result.describe()}")
        per_group.setdefault(groups[stand], []).append(result)
    return {group: limit_distribution(results) for group, results in sorted(per_group.items())}


def bounded_error_trajectories(
    errors_by_stand: Dict[str, ErrorSeries],
    neighbor_errors: Dict[str, NeighborErrors],
) -> Dict[str, ScoreSeries]:
    """Tolerance minus error per stand; negative where the stand is past its limit."""
    _require_stands(errors_by_stand, neighbor_errors)
    trajectories = {}
    for stand in sorted(errors_by_stand):
        own = errors_by_stand[stand]
        error, tol = _stand_tolerance(stand, own, neighbor_errors[stand])
        bounded = tol - error
        trajectories[stand] = ScoreSeries(
            axis=own.axis,
            values=np.nan_to_num(bounded),
            mask=np.isnan(bounded),
            score_name=ScoreName.SHIFTED_AE,
        )
    return trajectories
