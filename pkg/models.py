import math
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import (
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SEED,
    RICKER_ALPHA_MEAN,
    RICKER_HORIZON,
    RICKER_INIT_CV,
    RICKER_INIT_FRACTION,
    RICKER_K_MEAN,
    RICKER_MEMBERS,
    RICKER_PARAM_CV,
    SATURATION_BURN_IN,
    SATURATION_HORIZON,
)
from exceptions import AxisError, ConfigError, CoverageError, DistributionError, ParameterError


def _frozen(values: Any, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class _ArrayModel(BaseModel):
    """Immutable model that may hold numpy arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        for name in type(self).model_fields:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


# ---------------------------------------------------------------------------
# Enumerations
# ---------------------------------------------------------------------------


class VerificationKind(str, Enum):
    OBSERVED = "observed"
    SIMULATED = "simulated"


class ScoreName(str, Enum):
    AE = "ae"
    MAE = "mae"
    CRPS = "crps"
    CRPSS = "crpss"
    MAESS = "maess"
    SHIFTED_AE = "shifted_ae"


class Direction(str, Enum):
    SCORE_AT_MOST = "score_at_most"
    SCORE_AT_LEAST = "score_at_least"


class ToleranceKind(str, Enum):
    SCALAR = "scalar"
    PER_LEAD = "per_lead"
    GROUPED = "grouped"


class LimitStatus(str, Enum):
    CROSSED = "crossed"
    NOT_REACHED = "not_reached"
    NEVER_ACCEPTABLE = "never_acceptable"


class LimitKind(str, Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"
    POTENTIAL = "potential"


class Aggregation(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    BOTH = "both"


SCORE_ORIENTATION: Dict[ScoreName, Direction] = {
    ScoreName.AE: Direction.SCORE_AT_MOST,
    ScoreName.MAE: Direction.SCORE_AT_MOST,
    ScoreName.CRPS: Direction.SCORE_AT_MOST,
    ScoreName.CRPSS: Direction.SCORE_AT_LEAST,
    ScoreName.MAESS: Direction.SCORE_AT_LEAST,
    ScoreName.SHIFTED_AE: Direction.SCORE_AT_LEAST,
}


# ---------------------------------------------------------------------------
# Core data model
# ---------------------------------------------------------------------------


class TimeAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    t0: int = 0
    step: str = "step"
    length: int

    @field_validator("length")
    @classmethod
    def _positive_length(cls, v: int) -> int:
        if v < 1:
            raise AxisError(f"TimeAxis length must be >= 1, got {v}")
        return v

    def leads(self) -> np.ndarray:
        return np.arange(1, self.length + 1)

    def absolute(self, lead: int) -> int:
        if not 1 <= lead <= self.length:
            raise AxisError(f"Lead {lead} outside axis 1..{self.length}")
        return self.t0 + lead

    def require_same(self, other: "TimeAxis") -> None:
        if self != other:
            raise AxisError(f"Axis mismatch: {self} vs {other}")


class _MaskedSeries(_ArrayModel):
    """Per-lead values with an explicit missing-value mask (True = missing)."""

    axis: TimeAxis
    values: np.ndarray
    mask: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _split_missing(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "values" not in data:
            return data
        raw = [np.nan if v is None else v for v in np.asarray(data["values"], dtype=object).ravel()]
        values = np.asarray(raw, dtype=float)
        missing = np.isnan(values)
        if data.get("mask") is not None:
            missing = missing | np.asarray(data["mask"], dtype=bool)
        return {**data, "values": _frozen(np.where(missing, 0.0, values)), "mask": _frozen(missing, dtype=bool)}

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.shape != (self.axis.length,) or self.mask.shape != (self.axis.length,):
            raise AxisError(f"{type(self).__name__} has {self.values.size} values for an axis of length {self.axis.length}")
        if not np.all(np.isfinite(self.values)):
            raise AxisError(f"{type(self).__name__} values must be finite or missing")
        return self

    @property
    def present(self) -> np.ndarray:
        return ~self.mask

    def as_float(self) -> np.ndarray:
        """Values with missing entries as NaN, for vectorised arithmetic."""
        return np.where(self.mask, np.nan, self.values)

    def to_list(self) -> List[Optional[float]]:
        return [None if m else float(v) for v, m in zip(self.values, self.mask)]


class PointForecast(_ArrayModel):
    axis: TimeAxis
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _to_array(cls, v: Any) -> np.ndarray:
        return _frozen(v)

    @model_validator(mode="after")
    def _check(self):
        if self.values.shape != (self.axis.length,):
            raise AxisError(f"PointForecast has {self.values.size} values for an axis of length {self.axis.length}")
        if not np.all(np.isfinite(self.values)):
            raise AxisError("PointForecast values must be finite")
        return self


class EnsembleForecast(_ArrayModel):
    axis: TimeAxis
    members: np.ndarray
    floored_cells: int = 0

    @field_validator("members", mode="before")
    @classmethod
    def _to_matrix(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        return _frozen(arr)

    @model_validator(mode="after")
    def _check(self):
        if self.members.ndim != 2 or self.members.shape[1] != self.axis.length:
            raise AxisError(f"Ensemble shape {self.members.shape} does not match axis length {self.axis.length}")
        if self.members.shape[0] < 1:
            raise AxisError("Ensemble needs at least one member")
        if not np.all(np.isfinite(self.members)):
            raise AxisError("Ensemble values must be finite")
        return self

    @property
    def member_count(self) -> int:
        return self.members.shape[0]


class VerificationSeries(_MaskedSeries):
    kind: VerificationKind = VerificationKind.OBSERVED

    def slice(self, init_time: int, horizon: int) -> "VerificationSeries":
        """Re-base leads init_time+1 .. init_time+horizon onto a fresh axis starting at init_time."""
        start = init_time - self.axis.t0
        if start < 0 or start + horizon > self.axis.length:
            raise CoverageError(
                f"Init time {init_time} with horizon {horizon} exceeds verification coverage "
                f"{self.axis.t0 + 1}..{self.axis.t0 + self.axis.length}"
            )
        axis = TimeAxis(t0=init_time, step=self.axis.step, length=horizon)
        return VerificationSeries(
            axis=axis,
            values=self.values[start:start + horizon],
            mask=self.mask[start:start + horizon],
            kind=self.kind,
        )

    def value_at(self, absolute_index: int) -> Optional[float]:
        lead = absolute_index - self.axis.t0
        if not 1 <= lead <= self.axis.length or self.mask[lead - 1]:
            return None
        return float(self.values[lead - 1])


class ErrorSeries(_MaskedSeries):
    pass


# ---------------------------------------------------------------------------
# Scores and distributions
# ---------------------------------------------------------------------------


class ScoreSeries(_MaskedSeries):
    score_name: ScoreName

    @model_validator(mode="after")
    def _check_range(self):
        present = self.values[~self.mask]
        if self.score_name in (ScoreName.AE, ScoreName.MAE, ScoreName.CRPS) and np.any(present < 0):
            raise AxisError(f"{self.score_name.value} scores must be non-negative")
        if self.score_name in (ScoreName.CRPSS, ScoreName.MAESS) and np.any(present > 1):
            raise AxisError(f"{self.score_name.value} skill must not exceed 1")
        return self

    @property
    def orientation(self) -> Direction:
        return SCORE_ORIENTATION[self.score_name]


class GaussianDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std: float

    @model_validator(mode="after")
    def _check(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise DistributionError("Gaussian parameters must be finite")
        if self.std <= 0:
            raise DistributionError(f"Gaussian std must be > 0, got {self.std}")
        return self


# ---------------------------------------------------------------------------
# Reference models
# ---------------------------------------------------------------------------


class GaussianClimatology(BaseModel):
    """One Gaussian per cycle position; absolute index t uses position t mod cycle_length."""

    model_config = ConfigDict(frozen=True)

    variant: Literal["gaussian"] = "gaussian"
    cycle_length: int = 1
    distributions: List[GaussianDistribution]

    @model_validator(mode="after")
    def _check(self):
        if self.cycle_length < 1 or len(self.distributions) != self.cycle_length:
            raise DistributionError(
                f"Climatology needs one distribution per cycle position: "
                f"{len(self.distributions)} for cycle length {self.cycle_length}"
            )
        return self

    def distribution_at(self, absolute_index: int) -> GaussianDistribution:
        return self.distributions[absolute_index % self.cycle_length]


class SaturatedEnsemble(_ArrayModel):
    variant: Literal["saturated"] = "saturated"
    ensemble: EnsembleForecast

    @model_validator(mode="after")
    def _check(self):
        if self.ensemble.member_count < 2:
            raise DistributionError("Saturated ensemble reference needs at least 2 members")
        return self


class Persistence(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Literal["persistence"] = "persistence"
    anchor: float

    @field_validator("anchor")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise DistributionError("Persistence anchor must be finite")
        return v


class ExternalScores(_ArrayModel):
    variant: Literal["external"] = "external"
    scores: ScoreSeries


ReferenceModel = Annotated[
    Union[GaussianClimatology, SaturatedEnsemble, Persistence, ExternalScores],
    Field(discriminator="variant"),
]


# ---------------------------------------------------------------------------
# Tolerances and limits
# ---------------------------------------------------------------------------


class ToleranceSpec(_ArrayModel):
    kind: ToleranceKind
    direction: Direction
    rho: Optional[float] = None
    per_lead: Optional[np.ndarray] = None
    grouped: Optional[Dict[str, np.ndarray]] = None

    @model_validator(mode="after")
    def _check(self):
        expected = {
            ToleranceKind.SCALAR: self.rho is not None,
            ToleranceKind.PER_LEAD: self.per_lead is not None,
            ToleranceKind.GROUPED: self.grouped is not None,
        }
        if not expected[self.kind]:
            raise AxisError(f"{self.kind.value} tolerance is missing its values")
        return self

    @classmethod
    def scalar(cls, rho: float, direction: Direction = Direction.SCORE_AT_MOST) -> "ToleranceSpec":
        return cls(kind=ToleranceKind.SCALAR, direction=direction, rho=float(rho))

    @classmethod
    def per_lead_values(cls, rhos: Sequence[float], direction: Direction = Direction.SCORE_AT_MOST) -> "ToleranceSpec":
        return cls(kind=ToleranceKind.PER_LEAD, direction=direction, per_lead=_frozen(rhos))

    @classmethod
    def grouped_values(
        cls, groups: Dict[str, Sequence[float]], direction: Direction = Direction.SCORE_AT_MOST
    ) -> "ToleranceSpec":
        return cls(
            kind=ToleranceKind.GROUPED,
            direction=direction,
            grouped={str(k): _frozen(v) for k, v in groups.items()},
        )

    def thresholds(self, length: int, group: Optional[str] = None) -> np.ndarray:
        if self.kind == ToleranceKind.SCALAR:
            return np.full(length, self.rho)
        rhos = self.per_lead
        if self.kind == ToleranceKind.GROUPED:
            if group is None or group not in self.grouped:
                raise AxisError(f"Grouped tolerance has no entry for group {group!r}")
            rhos = self.grouped[group]
        if rhos.shape != (length,):
            raise AxisError(f"Tolerance has {rhos.size} leads, score axis has {length}")
        return rhos

    def describe(self) -> Dict[str, Any]:
        def listed(arr: np.ndarray) -> List[Optional[float]]:
            return [None if math.isnan(v) else float(v) for v in arr]

        record: Dict[str, Any] = {"kind": self.kind.value, "direction": self.direction.value}
        if self.kind == ToleranceKind.SCALAR:
            record["rho"] = self.rho
        elif self.kind == ToleranceKind.PER_LEAD:
            record["rho"] = listed(self.per_lead)
        else:
            record["groups"] = {k: listed(arr) for k, arr in sorted(self.grouped.items())}
        return record


class LimitResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    status: LimitStatus
    lead: Optional[int] = None
    time: Optional[int] = None
    max_lead: int
    score_name: ScoreName
    tolerance: ToleranceSpec
    limit_kind: LimitKind
    verification_kind: Optional[VerificationKind] = None
    acceptable_intervals: List[Tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        if self.status == LimitStatus.CROSSED and (self.lead is None or not 1 <= self.lead <= self.max_lead):
            raise AxisError(f"Crossed lead {self.lead} outside 1..{self.max_lead}")
        if self.limit_kind == LimitKind.POTENTIAL and self.verification_kind != VerificationKind.SIMULATED:
            raise AxisError("Potential limits require simulated verification")
        if self.verification_kind == VerificationKind.SIMULATED and self.limit_kind != LimitKind.POTENTIAL:
            raise AxisError(f"{self.limit_kind.value} limits against simulated verification are potential limits")
        return self

    def order_key(self) -> int:
        """NeverAcceptable < any Crossed lead < NotReached."""
        if self.status == LimitStatus.NEVER_ACCEPTABLE:
            return 0
        if self.status == LimitStatus.NOT_REACHED:
            return self.max_lead + 1
        return self.lead

    def describe(self) -> str:
        if self.status == LimitStatus.CROSSED:
            return f"lead {self.lead}"
        if self.status == LimitStatus.NOT_REACHED:
            return f"not reached within {self.max_lead} leads"
        return "never acceptable (violated at the first lead)"

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"status": self.status.value}
        if self.status == LimitStatus.CROSSED:
            record["lead"] = self.lead
            record["time"] = self.time
        record["max_lead"] = self.max_lead
        record["kind"] = self.limit_kind.value
        record["score"] = self.score_name.value
        record["tolerance"] = self.tolerance.describe()
        record["acceptable_intervals"] = [list(iv) for iv in self.acceptable_intervals]
        return record


class LimitDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_member_limits: List[LimitResult]
    mean: Optional[float] = None
    median: Optional[float] = None
    q25: Optional[float] = None
    q75: Optional[float] = None
    std: Optional[float] = None
    not_reached_count: int = 0
    never_acceptable_count: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.median is not None and not (self.q25 <= self.median <= self.q75):
            raise AxisError(f"Quartiles out of order: {self.q25}, {self.median}, {self.q75}")
        return self

    @property
    def crossed_leads(self) -> List[int]:
        return [r.lead for r in self.per_member_limits if r.status == LimitStatus.CROSSED]

    def to_record(self) -> Dict[str, Any]:
        return {
            "members": len(self.per_member_limits),
            "crossed": len(self.crossed_leads),
            "not_reached": self.not_reached_count,
            "never_acceptable": self.never_acceptable_count,
            "mean": self.mean,
            "median": self.median,
            "q25": self.q25,
            "q75": self.q75,
            "std": self.std,
            "leads": self.crossed_leads,
        }


class AggregateLimit(_ArrayModel):
    """Limit of a lead-wise aggregate over initialisations, with its spread bands."""

    statistic: Aggregation
    aggregate: ScoreSeries
    spread: np.ndarray
    lower: ScoreSeries
    upper: ScoreSeries
    limit: LimitResult
    lower_limit: LimitResult
    upper_limit: LimitResult


# ---------------------------------------------------------------------------
# Ricker configuration
# ---------------------------------------------------------------------------


class RickerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha_mean: float = RICKER_ALPHA_MEAN
    k_mean: float = RICKER_K_MEAN
    param_cv: float = RICKER_PARAM_CV
    init_value: float = RICKER_INIT_FRACTION * RICKER_K_MEAN
    init_cv: float = RICKER_INIT_CV
    member_count: int = RICKER_MEMBERS
    horizon: int = RICKER_HORIZON
    seed: int = DEFAULT_SEED
    process_noise_sd: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        if not self.k_mean > 0:
            raise ParameterError(f"k_mean must be > 0, got {self.k_mean}")
        if self.member_count < 1:
            raise ParameterError(f"member_count must be >= 1, got {self.member_count}")
        if self.horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {self.horizon}")
        for name in ("param_cv", "init_cv", "process_noise_sd"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.init_value < 0:
            raise ParameterError(f"init_value must be >= 0, got {self.init_value}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        return self

    @property
    def deterministic(self) -> bool:
        return self.param_cv == 0 and self.init_cv == 0 and self.process_noise_sd == 0


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class VerificationSection(_Section):
    source: str = "simulate"
    kind: Optional[VerificationKind] = None
    truth_seed: Optional[int] = None
    step: str = "step"

    @property
    def simulated(self) -> bool:
        return self.source == "simulate"

    def resolved_kind(self) -> VerificationKind:
        if self.kind is not None:
            return self.kind
        return VerificationKind.SIMULATED if self.simulated else VerificationKind.OBSERVED


class ForecastSection(_Section):
    source: str = "ricker"
    errors: Optional[str] = None
    init_time: int = 0
    forecast_dir: Optional[str] = None

    @property
    def simulated(self) -> bool:
        """Ricker ensembles unless per-init forecast files are given."""
        return self.source == "ricker" and self.forecast_dir is None


class ReferenceSection(_Section):
    kind: Literal["saturation", "climatology", "persistence", "none"] = "saturation"
    path: Optional[str] = None
    burn_in: int = SATURATION_BURN_IN
    saturation_horizon: int = SATURATION_HORIZON
    anchor: Optional[float] = None


class ScoreSection(_Section):
    name: ScoreName = ScoreName.CRPSS
    tolerance: Optional[float] = None


class SweepSpec(_Section):
    init_times: List[int]
    horizon: Optional[int] = None
    aggregation: Aggregation = Aggregation.BOTH

    @field_validator("init_times")
    @classmethod
    def _ascending(cls, v: List[int]) -> List[int]:
        if not v:
            raise ConfigError("sweep.init_times", "needs at least one init time")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError("sweep.init_times", "must be strictly ascending")
        if v[0] < 0:
            raise ConfigError("sweep.init_times", "must be >= 0")
        return v


class GroupedSection(_Section):
    path: str


class OutputSection(_Section):
    dir: str = DEFAULT_OUTPUT_DIR


class ExperimentConfig(_Section):
    seed: int = DEFAULT_SEED
    threads: Optional[int] = None
    verification: VerificationSection = Field(default_factory=VerificationSection)
    forecast: ForecastSection = Field(default_factory=ForecastSection)
    reference: ReferenceSection = Field(default_factory=ReferenceSection)
    score: ScoreSection = Field(default_factory=ScoreSection)
    sweep: Optional[SweepSpec] = None
    grouped: Optional[GroupedSection] = None
    ricker: RickerConfig = Field(default_factory=RickerConfig)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check(self):
        if self.grouped is not None:
            return self
        if self.verification.simulated and not self.forecast.simulated:
            raise ConfigError("verification.source", "simulated verification needs the ricker forecast source")
        skill = self.score.name in (ScoreName.CRPSS, ScoreName.MAESS)
        if skill and self.score.tolerance is not None:
            raise ConfigError("score.tolerance", f"{self.score.name.value} is judged against 0, drop the tolerance")
        if skill and self.reference.kind == "none":
            raise ConfigError("reference.kind", f"{self.score.name.value} needs a reference model")
        if not skill and self.score.tolerance is None and self.reference.kind == "none":
            raise ConfigError("score.tolerance", "absolute limits need a tolerance (or set a reference for a relative limit)")
        if self.score.name == ScoreName.SHIFTED_AE:
            raise ConfigError("score.name", "shifted_ae is derived from ae with a tolerance")
        if self.score.tolerance is not None and self.score.tolerance < 0:
            raise ConfigError("score.tolerance", "must be >= 0")
        if self.reference.kind == "climatology" and not self.reference.path:
            raise ConfigError("reference.path", "climatology reference needs a file")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        return self

    @property
    def absolute_mode(self) -> bool:
        return self.score.tolerance is not None
