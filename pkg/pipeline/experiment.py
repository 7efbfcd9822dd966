"""Forecast-limit workflows: the six-step recipe for one initialisation, the
initialisation-time sweep, tolerance curves, and the grouped stand-wise tolerance.

1. forecast model   2. verification   3. reference model
4. scoring function 5. tolerance      6. step-wise test of score against tolerance
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import DEFAULT_SWEEP_HORIZON, DEFAULT_SWEEP_INITS, DEFAULT_THREADS, FORECAST_INIT_PATTERN
from exceptions import ConfigError, CoverageError
from forecast.errors import ensemble_mean, member_errors, point_error
from forecast.ricker import SATURATION_STREAM, simulate_ensemble, simulate_truth
from ingest.parser import read_climatology_csv, read_ensemble_csv, read_errors_csv, read_series_csv, read_stands_csv
from models import (
    Aggregation,
    Direction,
    EnsembleForecast,
    ErrorSeries,
    ExperimentConfig,
    LimitDistribution,
    LimitKind,
    LimitResult,
    LimitStatus,
    Persistence,
    RickerConfig,
    ScoreName,
    ScoreSeries,
    SweepSpec,
    ToleranceSpec,
    VerificationKind,
    VerificationSeries,
)
from verification.limits import (
    absolute_kind,
    bounded_error_trajectories,
    detect_limit,
    grouped_limit,
    limit_distribution,
    limit_of_mean_score,
    member_limit_distribution,
    relative_kind,
    relative_limit,
    stand_limit,
    tolerance_curve,
)
from verification.reference import climatology_from_saturation, reference_crps, reference_mae
from verification.scoring import (
    absolute_error,
    crpss,
    ensemble_crps,
    mae_skill_score,
    mean_absolute_error,
    member_crps,
    shifted_absolute_error,
)

logger = logging.getLogger(__name__)

_SKILL = Direction.SCORE_AT_LEAST


@dataclass
class RunOutput:
    """Everything a command hands to the result writer."""

    scores: Dict[str, ScoreSeries] = field(default_factory=dict)
    limits: Dict[str, LimitResult] = field(default_factory=dict)
    distributions: Dict[str, LimitDistribution] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    heatmap: Optional[np.ndarray] = None
    heatmap_inits: List[int] = field(default_factory=list)
    headline: Optional[LimitResult] = None


@dataclass
class InitResult:
    """Scores and limits of one initialisation."""

    init_time: int
    scores: Dict[str, ScoreSeries]
    headline_series: ScoreSeries
    limit: LimitResult
    member_series: List[ScoreSeries]
    member_tolerance: ToleranceSpec
    member_kind: LimitKind


def resolve_threads(cli_threads: Optional[int], cfg: ExperimentConfig) -> int:
    if cli_threads or cfg.threads:
        return cli_threads or cfg.threads
    try:
        threads = int(DEFAULT_THREADS)
    except ValueError:
        raise ConfigError("HORIZONKIT_THREADS", f"must be a positive integer, got {DEFAULT_THREADS!r}")
    if threads < 1:
        raise ConfigError("HORIZONKIT_THREADS", f"must be a positive integer, got {threads}")
    return threads


def ricker_config(cfg: ExperimentConfig) -> RickerConfig:
    """The top-level seed is the master seed for every Ricker stream."""
    return cfg.ricker.model_copy(update={"seed": cfg.seed})


class Experiment:
    """Loaded inputs of one config: verification, reference, and a forecast factory per init time."""

    def __init__(self, cfg: ExperimentConfig, init_times: Sequence[int], horizon: Optional[int] = None):
        self.cfg = cfg
        self.ricker = ricker_config(cfg)
        self.verification_kind = cfg.verification.resolved_kind()
        self._check_sources(init_times)
        self.horizon = horizon or self._default_horizon(init_times[0])
        self.verification = self._load_verification(max(init_times) + self.horizon)

    # -- step 1/2: forecast and verification ---------------------------------

    def _check_sources(self, init_times: Sequence[int]) -> None:
        """A single forecast file belongs to one init time; sweeps need one file per init."""
        if len(init_times) < 2:
            return
        section = self.cfg.forecast
        if section.errors:
            raise ConfigError("forecast.errors", f"one error series cannot serve {len(init_times)} init times")
        if not section.simulated and not section.forecast_dir:
            raise ConfigError(
                "forecast.forecast_dir", f"{len(init_times)} init times need per-init forecast files, got one file"
            )

    def _default_horizon(self, init_time: int) -> int:
        if self.cfg.forecast.errors:
            return read_errors_csv(self.cfg.forecast.errors).axis.length
        if self.cfg.forecast.simulated:
            return self.ricker.horizon
        return read_ensemble_csv(self._forecast_path(init_time)).axis.length

    def _load_verification(self, length: int) -> VerificationSeries:
        section = self.cfg.verification
        if section.simulated:
            truth_seed = self.cfg.seed if section.truth_seed is None else section.truth_seed
            return simulate_truth(self.ricker, truth_seed, length=length)
        series = read_series_csv(section.source, kind=self.verification_kind, step=section.step)
        if series.axis.length < length:
            raise CoverageError(f"Verification covers {series.axis.length} leads, the run needs {length}")
        return series

    def _forecast_path(self, init_time: int) -> str:
        if self.cfg.forecast.forecast_dir:
            return os.path.join(self.cfg.forecast.forecast_dir, FORECAST_INIT_PATTERN.format(init=init_time))
        return self.cfg.forecast.source

    def initial_value(self, init_time: int) -> Optional[float]:
        """Verification value at the initialisation time (Y_0 for the Ricker model at t=0)."""
        if init_time == 0 and self.cfg.forecast.simulated:
            return self.ricker.init_value
        return self.verification.value_at(init_time)

    def forecast(self, init_time: int) -> EnsembleForecast:
        if self.cfg.forecast.simulated:
            y0 = self.initial_value(init_time)
            if y0 is None:
                raise CoverageError(f"No verification value at init time {init_time} to start the forecast from")
            return simulate_ensemble(self.ricker, init_time=init_time, init_value=y0, horizon=self.horizon)
        ensemble = read_ensemble_csv(self._forecast_path(init_time), t0=init_time, step=self.cfg.verification.step)
        if ensemble.axis.length != self.horizon:
            raise CoverageError(f"Forecast for init {init_time} has {ensemble.axis.length} leads, expected {self.horizon}")
        return ensemble

    # -- step 3: reference model ---------------------------------------------

    @cached_property
    def climatology(self):
        """Gaussian climatology shared by all init times (None for persistence or no reference)."""
        section = self.cfg.reference
        if section.kind == "climatology":
            return read_climatology_csv(section.path)
        if section.kind == "saturation":
            if not self.cfg.forecast.simulated:
                raise ConfigError("reference.kind", "saturation climatology needs the ricker forecast source")
            runs = simulate_ensemble(self.ricker, horizon=section.saturation_horizon, stream=SATURATION_STREAM)
            return climatology_from_saturation(runs, section.burn_in)
        return None

    def reference(self, init_time: int):
        if self.cfg.reference.kind != "persistence":
            return self.climatology
        anchor = self.cfg.reference.anchor
        if anchor is None:
            anchor = self.initial_value(init_time)
        if anchor is None:
            raise ConfigError("reference.anchor", f"no verification value at init time {init_time}; set an anchor")
        return Persistence(anchor=anchor)

    # -- steps 4-6: score, tolerance, step-wise test ---------------------------

    def score_init(self, init_time: int) -> InitResult:
        verification = self.verification.slice(init_time, self.horizon)
        if self.cfg.forecast.errors:
            return self._score_errors(init_time, verification)
        forecast = self.forecast(init_time)
        if self.cfg.absolute_mode:
            return self._score_absolute(init_time, forecast, verification)
        return self._score_relative(init_time, forecast, verification)

    def _score_errors(self, init_time: int, verification: VerificationSeries) -> InitResult:
        if self.cfg.score.name not in (ScoreName.AE, ScoreName.MAE) or not self.cfg.absolute_mode:
            raise ConfigError("forecast.errors", "ingested errors support ae/mae with a tolerance")
        raw = read_errors_csv(self.cfg.forecast.errors, step=self.cfg.verification.step)
        if raw.axis.length != self.horizon:
            raise CoverageError(f"Error series has {raw.axis.length} leads, expected {self.horizon}")
        err = ErrorSeries(axis=verification.axis, values=raw.values, mask=raw.mask)
        return self._absolute_result(init_time, [err], err, None)

    def _score_absolute(self, init_time: int, forecast: EnsembleForecast, verification: VerificationSeries) -> InitResult:
        name = self.cfg.score.name
        if name == ScoreName.CRPS:
            crps = ensemble_crps(forecast, verification)
            return self._absolute_result(init_time, None, None, crps, members=member_crps(forecast, verification))
        errors = member_errors(forecast, verification)
        point = point_error(ensemble_mean(forecast), verification)
        return self._absolute_result(init_time, errors, point, None)

    def _absolute_result(
        self,
        init_time: int,
        errors: Optional[List[ErrorSeries]],
        point: Optional[ErrorSeries],
        crps: Optional[ScoreSeries],
        members: Optional[List[ScoreSeries]] = None,
    ) -> InitResult:
        name, rho = self.cfg.score.name, self.cfg.score.tolerance
        tol = ToleranceSpec.scalar(rho)
        scores: Dict[str, ScoreSeries] = {}
        if name == ScoreName.CRPS:
            score = crps
        elif name == ScoreName.MAE:
            score = mean_absolute_error(errors)
            members = [absolute_error(e) for e in errors]
        else:
            score = absolute_error(point)
            scores["shifted_ae"] = shifted_absolute_error(point, rho)
            members = [absolute_error(e) for e in errors]
        scores = {name.value: score, **scores}
        headline = ScoreSeries(
            axis=score.axis, values=rho - score.values, mask=score.mask, score_name=ScoreName.SHIFTED_AE
        )
        kind = absolute_kind(self.verification_kind)
        limit = detect_limit(score, tol, kind, self.verification_kind)
        return InitResult(init_time, scores, headline, limit, members or [], tol, kind)

    def _score_relative(self, init_time: int, forecast: EnsembleForecast, verification: VerificationSeries) -> InitResult:
        ref = self.reference(init_time)
        name = self.cfg.score.name
        vk = self.verification_kind
        kind = relative_kind(vk)

        if name in (ScoreName.CRPS, ScoreName.CRPSS):
            score, ref_score = ensemble_crps(forecast, verification), reference_crps(ref, verification)
            skill = crpss(score, ref_score)
            members = [crpss(m, ref_score) for m in member_crps(forecast, verification)]
            labels = ("crps", "reference_crps", "crpss")
        else:
            errors = member_errors(forecast, verification)
            ref_score = reference_mae(ref, verification)
            if name == ScoreName.AE:
                score = absolute_error(point_error(ensemble_mean(forecast), verification))
            else:
                score = mean_absolute_error(errors)
            skill = mae_skill_score(score, ref_score)
            members = [mae_skill_score(absolute_error(e), ref_score) for e in errors]
            labels = (name.value if name != ScoreName.MAESS else "mae", "reference_mae", "maess")

        tol = ToleranceSpec.scalar(0.0, _SKILL)
        if name in (ScoreName.CRPSS, ScoreName.MAESS):
            limit = detect_limit(skill, tol, kind, vk)
        else:
            limit = relative_limit(score, ref_score, vk)
        scores = dict(zip(labels, (score, ref_score, skill)))
        return InitResult(init_time, scores, skill, limit, members, tol, kind)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _member_distribution(results: Sequence[InitResult], vk: VerificationKind) -> Optional[LimitDistribution]:
    series = [s for r in results for s in r.member_series]
    if not series:
        return None
    first = results[0]
    return member_limit_distribution(series, first.member_tolerance, first.member_kind, vk)


def run_limit(cfg: ExperimentConfig) -> RunOutput:
    """Six-step recipe for the configured initialisation time."""
    if cfg.grouped is not None:
        return run_grouped(cfg)
    init_time = cfg.forecast.init_time
    experiment = Experiment(cfg, [init_time])
    result = experiment.score_init(init_time)
    logger.info(f"Limit at init {init_time}: {result.limit.describe()}")

    output = RunOutput(scores=dict(result.scores), limits={"limit": result.limit}, headline=result.limit)
    distribution = _member_distribution([result], experiment.verification_kind)
    if distribution is not None:
        output.distributions["members"] = distribution
    return output


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Repeat the recipe from every init time.

    Writes the heatmap, limits of the lead-wise mean/median skill, the distribution of the
    per-init limits ("inits") and the member limits pooled over all inits ("members").
    """
    spec = cfg.sweep or SweepSpec(
        init_times=DEFAULT_SWEEP_INITS, horizon=DEFAULT_SWEEP_HORIZON if cfg.forecast.simulated else None
    )
    inits = spec.init_times
    experiment = Experiment(cfg, inits, horizon=spec.horizon)
    vk = experiment.verification_kind
    logger.info(f"Sweep over {len(inits)} init times, horizon {experiment.horizon}, {threads} thread(s)")

    if not cfg.absolute_mode:
        experiment.climatology  # build once before the workers share it
    # executor.map keeps submission order, so results never depend on scheduling
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(experiment.score_init, inits))

    heatmap = np.stack([r.headline_series.as_float() for r in results])
    output = RunOutput(heatmap=heatmap, heatmap_inits=list(inits))

    statistics = [Aggregation.MEAN, Aggregation.MEDIAN] if spec.aggregation == Aggregation.BOTH else [spec.aggregation]
    headlines = [r.headline_series for r in results]
    for statistic in statistics:
        agg = limit_of_mean_score(headlines, statistic, vk)
        label = statistic.value
        output.scores[label] = agg.aggregate
        output.scores[f"{label}_lower"] = agg.lower
        output.scores[f"{label}_upper"] = agg.upper
        output.limits[label] = agg.limit
        output.limits[f"{label}_lower"] = agg.lower_limit
        output.limits[f"{label}_upper"] = agg.upper_limit
        output.tables[f"{label}_spread"] = pd.DataFrame({"lead": agg.aggregate.axis.leads(), "spread": agg.spread})
        logger.info(f"Limit of lead-wise {label}: {agg.limit.describe()}")
    output.headline = output.limits[statistics[0].value]

    for r in results:
        output.limits[f"init_{r.init_time}"] = r.limit
    output.tables["init_limits"] = pd.DataFrame({
        "init_time": [r.init_time for r in results],
        "status": [r.limit.status.value for r in results],
        "lead": pd.array([r.limit.lead for r in results], dtype="Int64"),
    })

    output.distributions["inits"] = limit_distribution([r.limit for r in results])
    distribution = _member_distribution(results, vk)
    if distribution is not None:
        output.distributions["members"] = distribution
    return output


def run_tolerance_curve(cfg: ExperimentConfig, rhos: Sequence[float]) -> RunOutput:
    """Limit of the configured error score for every tolerance in `rhos`."""
    if cfg.score.name not in (ScoreName.AE, ScoreName.MAE, ScoreName.CRPS):
        raise ConfigError("score.name", "tolerance curves need an error score (ae, mae or crps)")
    init_time = cfg.forecast.init_time
    experiment = Experiment(cfg, [init_time])
    verification = experiment.verification.slice(init_time, experiment.horizon)

    if cfg.forecast.errors:
        raw = read_errors_csv(cfg.forecast.errors)
        err = ErrorSeries(axis=verification.axis, values=raw.values, mask=raw.mask)
        score = absolute_error(err) if cfg.score.name == ScoreName.AE else mean_absolute_error([err])
    else:
        forecast = experiment.forecast(init_time)
        if cfg.score.name == ScoreName.CRPS:
            score = ensemble_crps(forecast, verification)
        elif cfg.score.name == ScoreName.MAE:
            score = mean_absolute_error(member_errors(forecast, verification))
        else:
            score = absolute_error(point_error(ensemble_mean(forecast), verification))

    curve = tolerance_curve(score, rhos)
    output = RunOutput(scores={cfg.score.name.value: score})
    for i, (rho, limit) in enumerate(curve):
        output.limits[f"rho_{i}"] = limit
    output.tables["tolerance_curve"] = pd.DataFrame({
        "rho": [rho for rho, _ in curve],
        "status": [limit.status.value for _, limit in curve],
        "lead": pd.array([limit.lead for _, limit in curve], dtype="Int64"),
    })
    logger.info(f"Tolerance curve over {len(curve)} tolerances: first {curve[0][1].describe()}, last {curve[-1][1].describe()}")
    return output


def run_grouped(cfg: ExperimentConfig) -> RunOutput:
    """Stand-wise limits against neighbour-class tolerances, summarised per group."""
    own, neighbors, groups = read_stands_csv(cfg.grouped.path)
    distributions = grouped_limit(own, neighbors, groups)
    trajectories = bounded_error_trajectories(own, neighbors)

    output = RunOutput()
    for stand in sorted(own):
        output.limits[f"stand_{stand}"] = stand_limit(stand, own[stand], neighbors[stand])
    for group, dist in distributions.items():
        output.distributions[f"group_{group}"] = dist
        logger.info(f"Group {group}: mean limit {dist.mean} over {len(dist.crossed_leads)} crossed stands")

    rows = [
        {"stand": stand, "group": groups[stand], "lead": lead, "bounded_error": value}
        for stand, series in trajectories.items()
        for lead, value in zip(series.axis.leads(), series.as_float())
    ]
    output.tables["bounded_errors"] = pd.DataFrame(rows, columns=["stand", "group", "lead", "bounded_error"])

    # exit status 1 only when no stand was ever acceptable
    if all(r.status == LimitStatus.NEVER_ACCEPTABLE for r in output.limits.values()):
        output.headline = next(iter(output.limits.values()), None)
    return output
