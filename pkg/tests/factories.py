"""Small constructors for series used across the test modules."""

import numpy as np

from models import (
    EnsembleForecast,
    ErrorSeries,
    PointForecast,
    ScoreName,
    ScoreSeries,
    TimeAxis,
    VerificationKind,
    VerificationSeries,
)


def axis(length, t0=0):
    return TimeAxis(t0=t0, length=length)


def verification(values, t0=0, kind=VerificationKind.OBSERVED):
    return VerificationSeries(axis=axis(len(values), t0), values=values, kind=kind)


def errors(values, t0=0):
    return ErrorSeries(axis=axis(len(values), t0), values=values)


def scores(values, name=ScoreName.AE, t0=0):
    return ScoreSeries(axis=axis(len(values), t0), values=values, score_name=name)


def point(values, t0=0):
    return PointForecast(axis=axis(len(values), t0), values=values)


def ensemble(rows, t0=0):
    rows = np.asarray(rows, dtype=float)
    return EnsembleForecast(axis=axis(rows.shape[1], t0), members=rows)


def crossing_at(lead, length, rho=0.5):
    """AE series that is acceptable under rho everywhere except from `lead` on."""
    values = np.zeros(length)
    if lead is not None:
        values[lead - 1:] = 2 * rho
    return scores(values)
