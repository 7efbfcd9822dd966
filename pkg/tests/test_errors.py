import numpy as np
import pytest

from exceptions import AxisError, CoverageError
from forecast.errors import as_ensemble, ensemble_mean, member_errors, point_error
from models import TimeAxis, VerificationSeries
from tests.factories import ensemble, point, verification


def test_point_error_is_forecast_minus_verification():
    err = point_error(point([1.0, 2.0]), verification([1.0, 1.5]))
    assert err.to_list() == [0.0, 0.5]


def test_point_error_sign_convention():
    err = point_error(point([0.9, 1.1, 1.0]), verification([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(err.values, [-0.1, 0.1, 0.0], atol=1e-15)


def test_point_error_keeps_missing_verification_missing():
    err = point_error(point([3.0]), verification([None]))
    assert err.to_list() == [None]
    assert err.mask.tolist() == [True]


def test_point_error_rejects_mismatched_axes():
    with pytest.raises(AxisError):
        point_error(point([1.0, 2.0]), verification([1.0, 2.0], t0=1))


def test_member_errors_one_row_per_member():
    errs = member_errors(ensemble([[1, 1], [2, 2]]), verification([1.0, 2.0]))
    assert [e.to_list() for e in errs] == [[0.0, -1.0], [1.0, 0.0]]


def test_identical_members_give_identical_rows():
    errs = member_errors(ensemble([[0.3, 0.7, 1.1]] * 4), verification([0.5, 0.5, 0.5]))
    assert all(e == errs[0] for e in errs)


def test_mean_of_member_errors_equals_error_of_ensemble_mean():
    rng = np.random.default_rng(3)
    fc = ensemble(rng.normal(size=(40, 6)))
    obs = verification(rng.normal(size=6).tolist())
    mean_of_errors = np.mean([e.values for e in member_errors(fc, obs)], axis=0)
    np.testing.assert_allclose(point_error(ensemble_mean(fc), obs).values, mean_of_errors, atol=1e-12)


def test_point_forecast_as_single_member_ensemble():
    fc = as_ensemble(point([1.0, 2.0, 3.0]))
    assert fc.member_count == 1
    assert fc.members.tolist() == [[1.0, 2.0, 3.0]]


def test_axis_needs_at_least_one_lead():
    with pytest.raises(AxisError):
        TimeAxis(length=0)


def test_absolute_time_of_a_lead():
    assert TimeAxis(t0=10, length=5).absolute(3) == 13
    with pytest.raises(AxisError):
        TimeAxis(t0=10, length=5).absolute(6)


def test_none_and_nan_become_masked():
    series = verification([1.0, float("nan"), None])
    assert series.mask.tolist() == [False, True, True]
    assert series.values.tolist() == [1.0, 0.0, 0.0]
    assert series.to_list() == [1.0, None, None]


def test_series_length_must_match_axis():
    with pytest.raises(AxisError):
        VerificationSeries(axis=TimeAxis(length=3), values=[1.0, 2.0])


def test_slice_rebases_onto_init_time():
    long = verification([1.0, 2.0, 3.0, 4.0, 5.0])
    window = long.slice(2, 2)
    assert window.axis.t0 == 2
    assert window.to_list() == [3.0, 4.0]
    assert long.value_at(3) == 3.0
    assert long.value_at(0) is None


def test_slice_beyond_coverage():
    with pytest.raises(CoverageError):
        verification([1.0, 2.0, 3.0, 4.0, 5.0]).slice(4, 2)
