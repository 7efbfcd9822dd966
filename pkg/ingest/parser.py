import logging
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import (
    CLIMATOLOGY_HEADER,
    ENSEMBLE_HEADER,
    NA_TOKEN,
    SERIES_HEADER,
    STANDS_HEADER,
)
from exceptions import ConfigError, FormatError, IoError
from models import (
    EnsembleForecast,
    ErrorSeries,
    ExperimentConfig,
    GaussianClimatology,
    GaussianDistribution,
    TimeAxis,
    VerificationKind,
    VerificationSeries,
)

logger = logging.getLogger(__name__)

_CYCLE_LINE = re.compile(r"^#\s*cycle_length\s*=\s*(\d+)\s*$")


def _read_csv(path: str, header: List[str], skiprows: int = 0) -> pd.DataFrame:
    """Read every cell as text so number parsing (and its errors) stays under our control."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, skiprows=skiprows)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        raise IoError(f"Cannot read {path}: {e}")
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path} is empty", line=1 + skiprows)
    except pd.errors.ParserError as e:
        raise FormatError(f"{path}: {e}")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path} is not UTF-8 text: {e.reason} at byte {e.start}")
    if list(frame.columns) != header:
        raise FormatError(f"{path}: expected header {','.join(header)}, got {','.join(frame.columns)}", line=1 + skiprows)
    return frame


def _line(row_index: int, skiprows: int = 0) -> int:
    return row_index + 2 + skiprows


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise FormatError(f"{column} must be an integer, got {text!r}", line=line)


def _parse_float(text: str, line: int, column: str, allow_na: bool = False) -> Optional[float]:
    text = text.strip()
    if text == NA_TOKEN:
        if allow_na:
            return None
        raise FormatError(f"{column} may not be {NA_TOKEN}", line=line)
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"{column} must be a number or {NA_TOKEN}, got {text!r}", line=line)
    if not math.isfinite(value):
        raise FormatError(f"{column} must be finite, got {text!r}", line=line)
    return value


def _contiguous_leads(leads: List[int], lines: List[int], what: str) -> None:
    for expected, (lead, line) in enumerate(zip(leads, lines), start=1):
        if lead != expected:
            raise FormatError(f"{what}: expected lead {expected}, got {lead} (leads must run 1, 2, ... without gaps)", line=line)


def read_ensemble_csv(path: str, t0: int = 0, step: str = "step") -> EnsembleForecast:
    """Long-format ensemble (member,lead,value) into a dense member x lead matrix."""
    frame = _read_csv(path, ENSEMBLE_HEADER)
    cells: Dict[Tuple[int, int], float] = {}
    first_line: Dict[int, int] = {}
    for i, (member_text, lead_text, value_text) in enumerate(frame.itertuples(index=False)):
        line = _line(i)
        member = _parse_int(member_text, line, "member")
        lead = _parse_int(lead_text, line, "lead")
        if member < 0 or lead < 1:
            raise FormatError(f"member must be >= 0 and lead >= 1, got ({member}, {lead})", line=line)
        if (member, lead) in cells:
            raise FormatError(f"Duplicate cell for member {member}, lead {lead}", line=line)
        cells[(member, lead)] = _parse_float(value_text, line, "value")
        first_line.setdefault(member, line)

    if not cells:
        raise FormatError(f"{path} has no data rows", line=2)
    members = sorted(first_line)
    n_leads = max(lead for _, lead in cells)
    matrix = np.empty((len(members), n_leads))
    for row, member in enumerate(members):
        for lead in range(1, n_leads + 1):
            if (member, lead) not in cells:
                raise FormatError(f"Member {member} is missing lead {lead} (ragged ensemble)", line=first_line[member])
            matrix[row, lead - 1] = cells[(member, lead)]

    logger.info(f"Read ensemble {path}: {len(members)} members x {n_leads} leads")
    return EnsembleForecast(axis=TimeAxis(t0=t0, step=step, length=n_leads), members=matrix)


def _read_lead_values(path: str) -> List[Optional[float]]:
    frame = _read_csv(path, SERIES_HEADER)
    if frame.empty:
        raise FormatError(f"{path} has no data rows", line=2)
    leads, lines, values = [], [], []
    for i, (lead_text, value_text) in enumerate(frame.itertuples(index=False)):
        line = _line(i)
        leads.append(_parse_int(lead_text, line, "lead"))
        lines.append(line)
        values.append(_parse_float(value_text, line, "value", allow_na=True))
    _contiguous_leads(leads, lines, path)
    return values


def read_series_csv(
    path: str, kind: VerificationKind = VerificationKind.OBSERVED, t0: int = 0, step: str = "step"
) -> VerificationSeries:
    """lead,value series with the NA token for missing values."""
    values = _read_lead_values(path)
    n_missing = sum(v is None for v in values)
    logger.info(f"Read series {path}: {len(values)} leads, {n_missing} missing")
    return VerificationSeries(axis=TimeAxis(t0=t0, step=step, length=len(values)), values=values, kind=kind)


def read_errors_csv(path: str, t0: int = 0, step: str = "step") -> ErrorSeries:
    values = _read_lead_values(path)
    logger.info(f"Read error series {path}: {len(values)} leads")
    return ErrorSeries(axis=TimeAxis(t0=t0, step=step, length=len(values)), values=values)


def read_climatology_csv(path: str) -> GaussianClimatology:
    """position,mean,std rows after a '# cycle_length=N' comment line."""
    try:
        with open(path, encoding="utf-8") as f:
            first = f.readline().strip()
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path} is not UTF-8 text: {e.reason} at byte {e.start}", line=1)
    match = _CYCLE_LINE.match(first)
    if not match:
        raise FormatError(f"{path}: first line must be '# cycle_length=N'", line=1)
    cycle_length = int(match.group(1))

    frame = _read_csv(path, CLIMATOLOGY_HEADER, skiprows=1)
    if len(frame) != cycle_length:
        raise FormatError(f"{path}: {len(frame)} positions for cycle_length {cycle_length}", line=_line(len(frame) - 1, 1))
    distributions = []
    for i, (pos_text, mean_text, std_text) in enumerate(frame.itertuples(index=False)):
        line = _line(i, 1)
        if _parse_int(pos_text, line, "position") != i:
            raise FormatError(f"positions must run 0..{cycle_length - 1} in order", line=line)
        distributions.append(
            GaussianDistribution(mean=_parse_float(mean_text, line, "mean"), std=_parse_float(std_text, line, "std"))
        )
    logger.info(f"Read climatology {path}: cycle_length={cycle_length}")
    return GaussianClimatology(cycle_length=cycle_length, distributions=distributions)


def read_stands_csv(path: str) -> Tuple[Dict[str, ErrorSeries], Dict[str, List[ErrorSeries]], Dict[str, str]]:
    """Stand trajectories for the neighbour-class tolerance.

    Own error is forecast - observed (the stand's own class); neighbour errors are
    forecast - neighbour-class trajectory. A neighbour column that is NA for the whole
    stand (edge class) is dropped.
    """
    frame = _read_csv(path, STANDS_HEADER)
    rows: Dict[str, List[Tuple[int, int, List[Optional[float]]]]] = {}
    groups: Dict[str, str] = {}
    for i, record in enumerate(frame.itertuples(index=False)):
        line = _line(i)
        stand, group = record.stand.strip(), record.group.strip()
        if groups.setdefault(stand, group) != group:
            raise FormatError(f"Stand {stand} changes group from {groups[stand]} to {group}", line=line)
        numbers = [
            _parse_float(getattr(record, column), line, column, allow_na=True)
            for column in ("forecast", "observed", "neighbor_lower", "neighbor_upper")
        ]
        rows.setdefault(stand, []).append((_parse_int(record.lead, line, "lead"), line, numbers))

    own: Dict[str, ErrorSeries] = {}
    neighbors: Dict[str, List[ErrorSeries]] = {}
    for stand, stand_rows in rows.items():
        _contiguous_leads([r[0] for r in stand_rows], [r[1] for r in stand_rows], f"stand {stand}")
        table = np.array([[np.nan if v is None else v for v in r[2]] for r in stand_rows])
        axis = TimeAxis(length=len(stand_rows))
        forecast = table[:, 0]
        own[stand] = ErrorSeries(axis=axis, values=forecast - table[:, 1])
        neighbors[stand] = [
            ErrorSeries(axis=axis, values=forecast - table[:, col])
            for col in (2, 3)
            if not np.all(np.isnan(table[:, col]))
        ]

    logger.info(f"Read stands {path}: {len(own)} stands in {len(set(groups.values()))} groups")
    return own, neighbors, groups


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

_PATH_KEYS = [
    ("verification", "source", "simulate"),
    ("forecast", "source", "ricker"),
    ("forecast", "errors", None),
    ("forecast", "forecast_dir", None),
    ("reference", "path", None),
    ("grouped", "path", None),
]


def _resolve_paths(raw: Dict[str, Any], base: Path) -> Dict[str, Any]:
    """Data paths in a config file are relative to the file itself."""
    for section, key, keyword in _PATH_KEYS:
        value = raw.get(section, {}).get(key) if isinstance(raw.get(section), dict) else None
        if isinstance(value, str) and value != keyword and not Path(value).is_absolute():
            raw[section][key] = str(base / value)
    return raw


def _validation_to_config_error(e: ValidationError) -> ConfigError:
    first = e.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "config"
    if first["type"] == "extra_forbidden":
        return ConfigError(key, "unknown key")
    return ConfigError(key, first["msg"])


def build_config(raw: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise _validation_to_config_error(e)


def load_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """TOML config file (optional) merged with section-level overrides, validated."""
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except OSError as e:
            raise IoError(f"Cannot read config {path}: {e}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("config", f"{path} is not valid TOML: {e}")
        except UnicodeDecodeError as e:
            raise ConfigError("config", f"{path} is not UTF-8 text: {e.reason} at byte {e.start}")
        raw = _resolve_paths(raw, Path(path).resolve().parent)

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        target = raw
        *parents, leaf = dotted.split(".")
        for part in parents:
            target = target.setdefault(part, {})
        target[leaf] = value

    config = build_config(raw)
    logger.info(f"Loaded config {path or '<defaults>'} with overrides {sorted(k for k, v in (overrides or {}).items() if v is not None)}")
    return config
