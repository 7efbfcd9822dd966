from typing import List

import numpy as np

from models import EnsembleForecast, ErrorSeries, PointForecast, VerificationSeries


def point_error(forecast: PointForecast, verification: VerificationSeries) -> ErrorSeries:
    """Predictive error forecast - verification per lead; missing verification stays missing."""
    forecast.axis.require_same(verification.axis)
    return ErrorSeries(
        axis=forecast.axis,
        values=forecast.values - verification.values,
        mask=verification.mask,
    )


def member_errors(forecast: EnsembleForecast, verification: VerificationSeries) -> List[ErrorSeries]:
    """One ErrorSeries per ensemble member. Column tau is the error sample at that lead."""
    forecast.axis.require_same(verification.axis)
    diffs = forecast.members - verification.values[np.newaxis, :]
    return [ErrorSeries(axis=forecast.axis, values=row, mask=verification.mask) for row in diffs]


def ensemble_mean(forecast: EnsembleForecast) -> PointForecast:
    return PointForecast(axis=forecast.axis, values=forecast.members.mean(axis=0))


def as_ensemble(forecast: PointForecast) -> EnsembleForecast:
    return EnsembleForecast(axis=forecast.axis, members=forecast.values[np.newaxis, :])
