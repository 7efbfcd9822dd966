import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from config import CLIMATOLOGY_HEADER, ENSEMBLE_HEADER, FLOAT_FORMAT, HEATMAP_HEADER, NA_TOKEN, SERIES_HEADER
from exceptions import AxisError, IoError
from models import (
    EnsembleForecast,
    ExperimentConfig,
    GaussianClimatology,
    LimitDistribution,
    LimitResult,
    ScoreSeries,
    VerificationSeries,
)

logger = logging.getLogger(__name__)


def format_value(value: Optional[float]) -> str:
    if value is None or np.isnan(value):
        return NA_TOKEN
    return format(float(value), FLOAT_FORMAT)


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of every field that can change results (thread count and output dir cannot)."""
    payload = cfg.model_dump(mode="json", exclude={"threads", "output"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_text(path: str, text: str) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}")


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    return "\n".join(lines) + "\n"


def _json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_ensemble_csv(path: str, ensemble: EnsembleForecast) -> None:
    rows = [
        (str(member), str(lead + 1), format_value(ensemble.members[member, lead]))
        for member in range(ensemble.member_count)
        for lead in range(ensemble.axis.length)
    ]
    _write_text(path, _csv(ENSEMBLE_HEADER, rows))


def write_series_csv(path: str, series: VerificationSeries) -> None:
    rows = [(str(lead), format_value(v)) for lead, v in zip(series.axis.leads(), series.to_list())]
    _write_text(path, _csv(SERIES_HEADER, rows))


def write_climatology_csv(path: str, climatology: GaussianClimatology) -> None:
    rows = [(str(i), format_value(d.mean), format_value(d.std)) for i, d in enumerate(climatology.distributions)]
    _write_text(path, f"# cycle_length={climatology.cycle_length}\n" + _csv(CLIMATOLOGY_HEADER, rows))


def _scores_table(scores: Mapping[str, ScoreSeries]) -> str:
    lengths = {s.axis.length for s in scores.values()}
    if len(lengths) != 1:
        raise AxisError(f"Score series written together must share one lead axis, got lengths {sorted(lengths)}")
    length = lengths.pop()
    names = list(scores)
    columns = [scores[name].to_list() for name in names]
    rows = [[str(lead)] + [format_value(col[lead - 1]) for col in columns] for lead in range(1, length + 1)]
    return _csv(["lead"] + names, rows)


def _heatmap_table(init_times: Sequence[int], matrix: np.ndarray) -> str:
    rows = [
        (str(init), str(lead + 1), format_value(matrix[i, lead]))
        for i, init in enumerate(init_times)
        for lead in range(matrix.shape[1])
    ]
    return _csv(HEATMAP_HEADER, rows)


def _frame_table(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%" + FLOAT_FORMAT, na_rep=NA_TOKEN, lineterminator="\n")


def write_results(
    out_dir: str,
    scores: Mapping[str, ScoreSeries],
    limits: Mapping[str, LimitResult],
    heatmap: Optional[np.ndarray] = None,
    heatmap_inits: Sequence[int] = (),
    distributions: Optional[Mapping[str, LimitDistribution]] = None,
    tables: Optional[Mapping[str, pd.DataFrame]] = None,
    manifest_info: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Write scores.csv, limits.json, heatmap.csv, extra tables and manifest.json.

    Contents depend only on the inputs (no timestamps), so identical runs produce
    byte-identical files. Returns the manifest.
    """
    files: Dict[str, str] = {}
    omitted: List[str] = []

    if scores:
        files["scores.csv"] = _scores_table(scores)
    else:
        omitted.append("scores.csv")

    limits_payload: Dict[str, Any] = {"limits": {name: r.to_record() for name, r in limits.items()}}
    if distributions:
        limits_payload["distributions"] = {name: d.to_record() for name, d in distributions.items()}
    files["limits.json"] = _json(limits_payload)

    if heatmap is not None and heatmap.size > 0:
        files["heatmap.csv"] = _heatmap_table(heatmap_inits, heatmap)
    else:
        omitted.append("heatmap.csv")

    for name, frame in (tables or {}).items():
        files[f"{name}.csv"] = _frame_table(frame)

    for name, text in files.items():
        _write_text(os.path.join(out_dir, name), text)

    manifest = {
        **(manifest_info or {}),
        "files": {name: hashlib.sha256(text.encode("utf-8")).hexdigest() for name, text in sorted(files.items())},
        "omitted": omitted,
    }
    _write_text(os.path.join(out_dir, "manifest.json"), _json(manifest))
    logger.info(f"Wrote {len(files)} result files to {out_dir}" + (f" (omitted: {', '.join(omitted)})" if omitted else ""))
    return manifest
