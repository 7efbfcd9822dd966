import json
import os

import numpy as np
import pandas as pd
import pytest

from exceptions import AxisError, IoError
from ingest.parser import read_ensemble_csv, read_series_csv
from models import ScoreName, ToleranceSpec
from tests.factories import ensemble, scores, verification
from utils.results import format_value, write_ensemble_csv, write_results, write_series_csv
from verification.limits import detect_limit


def _limit(values):
    return detect_limit(scores(values), ToleranceSpec.scalar(0.5))


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def test_format_value():
    assert format_value(None) == "NA"
    assert format_value(float("nan")) == "NA"
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(1 / 3)) == 1 / 3


def test_results_without_heatmap(tmp_path):
    manifest = write_results(str(tmp_path), {"ae": scores([0.1, 0.2])}, {"limit": _limit([0.1, 0.2])})
    assert sorted(os.listdir(tmp_path)) == ["limits.json", "manifest.json", "scores.csv"]
    assert manifest["omitted"] == ["heatmap.csv"]
    assert sorted(manifest["files"]) == ["limits.json", "scores.csv"]


def test_scores_table_layout(tmp_path):
    write_results(
        str(tmp_path),
        {"crps": scores([0.1, None], ScoreName.CRPS), "crpss": scores([0.5, None], ScoreName.CRPSS)},
        {},
    )
    assert _read(tmp_path / "scores.csv") == "lead,crps,crpss\n1,0.10000000000000001,0.5\n2,NA,NA\n"


def test_not_reached_limit_record(tmp_path):
    write_results(str(tmp_path), {}, {"limit": _limit([0.1, 0.2])})
    payload = json.loads(_read(tmp_path / "limits.json"))
    record = payload["limits"]["limit"]
    assert record["status"] == "not_reached"
    assert record["max_lead"] == 2
    assert "lead" not in record


def test_heatmap_and_tables(tmp_path):
    manifest = write_results(
        str(tmp_path),
        {},
        {},
        heatmap=np.array([[0.5, np.nan], [0.25, -0.5]]),
        heatmap_inits=[0, 3],
        tables={"init_limits": pd.DataFrame({"init_time": [0, 3], "lead": pd.array([2, None], dtype="Int64")})},
    )
    assert _read(tmp_path / "heatmap.csv") == "init_time,lead,value\n0,1,0.5\n0,2,NA\n3,1,0.25\n3,2,-0.5\n"
    assert _read(tmp_path / "init_limits.csv") == "init_time,lead\n0,2\n3,NA\n"
    assert "init_limits.csv" in manifest["files"]


def test_rerun_is_byte_identical(tmp_path):
    args = ({"ae": scores([0.1, 0.7])}, {"limit": _limit([0.1, 0.7])})
    write_results(str(tmp_path / "a"), *args, manifest_info={"seed": 1})
    write_results(str(tmp_path / "b"), *args, manifest_info={"seed": 1})
    for name in ("scores.csv", "limits.json", "manifest.json"):
        assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        write_results(str(blocker / "out"), {"ae": scores([0.1])}, {})


def test_score_columns_must_share_an_axis(tmp_path):
    with pytest.raises(AxisError):
        write_results(str(tmp_path), {"a": scores([0.1]), "b": scores([0.1, 0.2])}, {})


def test_ensemble_file_round_trip(tmp_path):
    fc = ensemble(np.random.default_rng(0).normal(size=(3, 4)))
    path = str(tmp_path / "ens.csv")
    write_ensemble_csv(path, fc)
    assert read_ensemble_csv(path) == fc


def test_series_file_keeps_missing_values(tmp_path):
    path = str(tmp_path / "obs.csv")
    write_series_csv(path, verification([0.1, None, 1e-20]))
    assert read_series_csv(path).to_list() == [0.1, None, 1e-20]
