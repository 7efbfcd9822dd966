import numpy as np
import pytest

from exceptions import (
    AxisError,
    CoverageError,
    DegenerateReferenceError,
    EmptyInputError,
    InputOrderError,
    OrientationError,
)
from models import (
    Aggregation,
    Direction,
    LimitKind,
    LimitStatus,
    ScoreName,
    ToleranceSpec,
    VerificationKind,
)
from tests.factories import crossing_at, errors, scores
from verification.limits import (
    absolute_kind,
    bounded_error_trajectories,
    detect_limit,
    grouped_limit,
    limit_of_mean_score,
    member_limit_distribution,
    relative_kind,
    relative_limit,
    stand_limit,
    tolerance_curve,
)

SKILL_ZERO = ToleranceSpec.scalar(0.0, Direction.SCORE_AT_LEAST)


# -- detect_limit ------------------------------------------------------------


def test_first_lead_above_tolerance():
    result = detect_limit(scores([0.1, 0.2, 0.3]), ToleranceSpec.scalar(0.25))
    assert result.status == LimitStatus.CROSSED
    assert result.lead == 3
    assert result.time == 3


def test_tolerance_never_exceeded():
    result = detect_limit(scores([0.1, 0.2, 0.2]), ToleranceSpec.scalar(0.25))
    assert result.status == LimitStatus.NOT_REACHED
    assert result.lead is None
    assert result.max_lead == 3


def test_violated_at_first_lead():
    result = detect_limit(scores([0.3, 0.1]), ToleranceSpec.scalar(0.25))
    assert result.status == LimitStatus.NEVER_ACCEPTABLE


def test_score_equal_to_tolerance_is_acceptable():
    assert detect_limit(scores([0.25, 0.25]), ToleranceSpec.scalar(0.25)).status == LimitStatus.NOT_REACHED


def test_time_is_offset_by_init_time():
    result = detect_limit(scores([0.1, 0.9], t0=10), ToleranceSpec.scalar(0.5))
    assert (result.lead, result.time) == (2, 12)


def test_direction_must_match_score_orientation():
    with pytest.raises(OrientationError):
        detect_limit(scores([0.1]), SKILL_ZERO)


def test_missing_scores_are_skipped():
    tol = ToleranceSpec.scalar(0.25)
    assert detect_limit(scores([0.1, None, 0.1, 0.5]), tol).lead == 4
    assert detect_limit(scores([None, 0.5, 0.1]), tol).status == LimitStatus.NEVER_ACCEPTABLE
    assert detect_limit(scores([None, None]), tol).status == LimitStatus.NOT_REACHED


def test_return_of_skill_is_kept_as_intervals():
    result = detect_limit(scores([0.1, 0.5, 0.1, 0.1, 0.6]), ToleranceSpec.scalar(0.25))
    assert result.lead == 2
    assert result.acceptable_intervals == [(1, 1), (3, 4)]


def test_per_lead_tolerance():
    result = detect_limit(scores([1.0, 1.0, 1.0]), ToleranceSpec.per_lead_values([2.0, 2.0, 0.5]))
    assert result.lead == 3
    with pytest.raises(AxisError):
        detect_limit(scores([1.0, 1.0]), ToleranceSpec.per_lead_values([2.0, 2.0, 0.5]))


def test_grouped_tolerance_picks_the_group():
    tol = ToleranceSpec.grouped_values({"a": [2.0, 0.5], "b": [2.0, 2.0]})
    assert detect_limit(scores([1.0, 1.0]), tol, group="a").lead == 2
    assert detect_limit(scores([1.0, 1.0]), tol, group="b").status == LimitStatus.NOT_REACHED
    with pytest.raises(AxisError):
        detect_limit(scores([1.0, 1.0]), tol, group="c")


def test_skill_at_zero_is_acceptable():
    skill = scores([0.5, 0.0, -0.1], ScoreName.CRPSS)
    result = detect_limit(skill, SKILL_ZERO, LimitKind.POTENTIAL, VerificationKind.SIMULATED)
    assert result.lead == 3
    assert result.limit_kind == LimitKind.POTENTIAL


def test_potential_limit_needs_simulated_verification():
    with pytest.raises(AxisError):
        detect_limit(scores([0.5], ScoreName.CRPSS), SKILL_ZERO, LimitKind.POTENTIAL, VerificationKind.OBSERVED)


@pytest.mark.parametrize("kind", [LimitKind.ABSOLUTE, LimitKind.RELATIVE])
def test_simulated_verification_only_gives_potential_limits(kind):
    with pytest.raises(AxisError, match="potential"):
        detect_limit(scores([0.1]), ToleranceSpec.scalar(0.5), kind, VerificationKind.SIMULATED)


def test_emitted_kind_follows_the_verification():
    assert absolute_kind(VerificationKind.SIMULATED) == LimitKind.POTENTIAL
    assert absolute_kind(VerificationKind.OBSERVED) == LimitKind.ABSOLUTE
    assert absolute_kind(None) == LimitKind.ABSOLUTE
    assert relative_kind(VerificationKind.SIMULATED) == LimitKind.POTENTIAL
    assert relative_kind(VerificationKind.OBSERVED) == LimitKind.RELATIVE



def test_limit_ordering():
    tol = ToleranceSpec.scalar(0.25)
    never = detect_limit(scores([0.5, 0.5]), tol)
    crossed = detect_limit(scores([0.1, 0.5]), tol)
    reached = detect_limit(scores([0.1, 0.1]), tol)
    assert never.order_key() < crossed.order_key() < reached.order_key()


def test_not_reached_record():
    record = detect_limit(scores([0.1, 0.1]), ToleranceSpec.scalar(0.25)).to_record()
    assert record["status"] == "not_reached"
    assert record["max_lead"] == 2
    assert "lead" not in record


# -- relative_limit ----------------------------------------------------------


def test_forecast_always_better_than_reference():
    result = relative_limit(scores([0.1, 0.2], ScoreName.CRPS), scores([0.3, 0.3], ScoreName.CRPS))
    assert result.status == LimitStatus.NOT_REACHED


def test_equal_scores_stay_acceptable():
    s = scores([0.4, 0.1, 0.7], ScoreName.MAE)
    assert relative_limit(s, s).status == LimitStatus.NOT_REACHED


def test_relative_limit_by_hand():
    result = relative_limit(scores([1.0, 2.0, 3.0], ScoreName.MAE), scores([2.0, 2.0, 2.0], ScoreName.MAE))
    assert result.lead == 3
    assert result.score_name == ScoreName.MAESS
    assert result.limit_kind == LimitKind.RELATIVE


def test_relative_limit_against_simulated_verification_is_potential():
    result = relative_limit(
        scores([1.0, 3.0], ScoreName.CRPS), scores([2.0, 2.0], ScoreName.CRPS), VerificationKind.SIMULATED
    )
    assert result.limit_kind == LimitKind.POTENTIAL
    assert result.score_name == ScoreName.CRPSS


def test_relative_limit_rejects_perfect_reference():
    with pytest.raises(DegenerateReferenceError):
        relative_limit(scores([0.1], ScoreName.CRPS), scores([0.0], ScoreName.CRPS))


def test_relative_limit_invariant_under_rescaling():
    rng = np.random.default_rng(17)
    for _ in range(100):
        f, r = rng.uniform(0.01, 1.0, 12), rng.uniform(0.01, 1.0, 12)
        c = rng.uniform(0.1, 10.0)
        base = relative_limit(scores(f, ScoreName.CRPS), scores(r, ScoreName.CRPS))
        scaled = relative_limit(scores(f * c, ScoreName.CRPS), scores(r * c, ScoreName.CRPS))
        assert (scaled.status, scaled.lead) == (base.status, base.lead)


# -- member_limit_distribution -------------------------------------------------


def test_distribution_of_member_crossings():
    members = [crossing_at(lead, 10) for lead in (2, 4, 6, 8)]
    dist = member_limit_distribution(members, ToleranceSpec.scalar(0.5))
    assert (dist.mean, dist.median, dist.q25, dist.q75) == (5.0, 5.0, 3.5, 6.5)
    assert dist.std == pytest.approx(np.sqrt(20 / 3))
    assert dist.crossed_leads == [2, 4, 6, 8]


def test_identical_members_give_degenerate_distribution():
    dist = member_limit_distribution([crossing_at(3, 5)] * 4, ToleranceSpec.scalar(0.5))
    assert dist.q25 == dist.median == dist.q75 == 3.0


def test_not_reached_members_are_counted_not_averaged():
    members = [crossing_at(2, 6), crossing_at(4, 6), crossing_at(None, 6), crossing_at(1, 6)]
    dist = member_limit_distribution(members, ToleranceSpec.scalar(0.5))
    assert dist.mean == 3.0
    assert dist.not_reached_count == 1
    assert dist.never_acceptable_count == 1


def test_no_member_crossed():
    dist = member_limit_distribution([crossing_at(None, 4)], ToleranceSpec.scalar(0.5))
    assert dist.mean is None
    assert dist.not_reached_count == 1


def test_distribution_needs_members():
    with pytest.raises(EmptyInputError):
        member_limit_distribution([], ToleranceSpec.scalar(0.5))


# -- tolerance_curve ---------------------------------------------------------


def test_tolerance_curve_inverts_an_increasing_score():
    curve = tolerance_curve(scores([1.0, 2.0, 3.0, 4.0]), [0.5, 1.5, 2.5, 3.5, 4.5])
    outcomes = [(r.status, r.lead) for _, r in curve]
    assert outcomes == [
        (LimitStatus.NEVER_ACCEPTABLE, None),
        (LimitStatus.CROSSED, 2),
        (LimitStatus.CROSSED, 3),
        (LimitStatus.CROSSED, 4),
        (LimitStatus.NOT_REACHED, None),
    ]


def test_tolerance_curve_needs_ascending_tolerances():
    with pytest.raises(InputOrderError):
        tolerance_curve(scores([1.0]), [0.5, 0.5])
    with pytest.raises(InputOrderError):
        tolerance_curve(scores([1.0]), [1.0, 0.5])


def test_tolerance_curve_needs_an_error_score():
    with pytest.raises(OrientationError):
        tolerance_curve(scores([0.5], ScoreName.CRPSS), [0.0, 1.0])


# -- limit_of_mean_score -----------------------------------------------------


def test_replicated_series_aggregates_to_itself():
    series = scores([0.9, 0.4, -0.2, 0.1], ScoreName.CRPSS)
    agg = limit_of_mean_score([series] * 3, Aggregation.MEAN)
    assert agg.aggregate.values == pytest.approx(series.values)
    assert agg.limit.lead == 3
    median = limit_of_mean_score([series] * 3, Aggregation.MEDIAN)
    assert median.aggregate.values.tolist() == series.values.tolist()


def test_mean_of_opposite_series_is_zero_and_acceptable():
    agg = limit_of_mean_score(
        [scores([1.0, -1.0], ScoreName.CRPSS), scores([-1.0, 1.0], ScoreName.CRPSS)], Aggregation.MEAN
    )
    assert agg.aggregate.values.tolist() == [0.0, 0.0]
    assert agg.limit.status == LimitStatus.NOT_REACHED
    assert agg.spread.tolist() == [1.0, 1.0]
    assert agg.lower_limit.status == LimitStatus.NEVER_ACCEPTABLE
    assert agg.upper.values.tolist() == [1.0, 1.0]


def test_median_bands_are_quartiles():
    agg = limit_of_mean_score(
        [scores([1.0, -1.0], ScoreName.CRPSS), scores([-1.0, 1.0], ScoreName.CRPSS)], Aggregation.MEDIAN
    )
    assert agg.lower.values.tolist() == [-0.5, -0.5]
    assert agg.upper.values.tolist() == [0.5, 0.5]


def test_upper_band_of_skill_is_clipped_at_one():
    agg = limit_of_mean_score(
        [scores([1.0, 0.2], ScoreName.CRPSS), scores([0.6, 0.2], ScoreName.CRPSS)], Aggregation.MEAN
    )
    assert agg.upper.values[0] == 1.0


def test_lead_missing_in_every_init_stays_missing():
    agg = limit_of_mean_score(
        [scores([0.5, None], ScoreName.CRPSS), scores([0.3, None], ScoreName.CRPSS)], Aggregation.MEAN
    )
    assert agg.aggregate.mask.tolist() == [False, True]


def test_aggregate_over_simulated_inits_is_potential():
    agg = limit_of_mean_score([scores([0.5], ScoreName.CRPSS)], Aggregation.MEAN, VerificationKind.SIMULATED)
    assert agg.limit.limit_kind == LimitKind.POTENTIAL


def test_aggregate_input_checks():
    with pytest.raises(EmptyInputError):
        limit_of_mean_score([], Aggregation.MEAN)
    with pytest.raises(OrientationError):
        limit_of_mean_score([scores([0.5])], Aggregation.MEAN)
    with pytest.raises(AxisError):
        limit_of_mean_score([scores([0.5], ScoreName.CRPSS)], Aggregation.BOTH)
    with pytest.raises(AxisError):
        limit_of_mean_score([scores([0.5], ScoreName.CRPSS), scores([0.5, 0.5], ScoreName.CRPSS)], Aggregation.MEAN)


# -- grouped stand-wise tolerance ----------------------------------------------


def _three_stands():
    neighbor = {s: errors([0.3] * 6) for s in ("a", "b", "c")}
    own = {
        "a": errors([0.1, 0.4, 0.1, 0.1, 0.1, 0.1]),
        "b": errors([0.1, 0.1, 0.1, 0.1, 0.3, 0.1]),
        "c": errors([0.1] * 6),
    }
    return own, neighbor, {"a": "g", "b": "g", "c": "g"}


def test_grouped_limit_mean_over_crossed_stands():
    own, neighbor, groups = _three_stands()
    dist = grouped_limit(own, neighbor, groups)["g"]
    assert dist.crossed_leads == [2, 5]
    assert dist.mean == 3.5
    assert dist.not_reached_count == 1


def test_own_error_reaching_neighbour_error_at_first_lead():
    result = stand_limit("x", errors([0.3, 0.1]), errors([0.3, 0.3]))
    assert result.status == LimitStatus.NEVER_ACCEPTABLE


def test_stand_tolerance_is_the_closer_neighbour():
    result = stand_limit("x", errors([0.2, 0.2]), [errors([0.5, 0.5]), errors([-0.15, 0.5])])
    assert result.status == LimitStatus.NEVER_ACCEPTABLE
    assert result.tolerance.per_lead.tolist() == [0.15, 0.5]


def test_grouped_limit_per_group_key():
    own, neighbor, groups = _three_stands()
    groups["c"] = "h"
    result = grouped_limit(own, neighbor, groups)
    assert sorted(result) == ["g", "h"]
    assert result["g"].mean == 3.5
    assert result["h"].mean is None


def test_stand_without_neighbour_series():
    own, neighbor, groups = _three_stands()
    del neighbor["b"]
    with pytest.raises(CoverageError):
        grouped_limit(own, neighbor, groups)


def test_bounded_error_trajectories():
    own, neighbor, _ = _three_stands()
    bounded = bounded_error_trajectories(own, neighbor)
    assert bounded["a"].to_list() == pytest.approx([0.2, -0.1, 0.2, 0.2, 0.2, 0.2])
    assert bounded["a"].score_name == ScoreName.SHIFTED_AE
