"""Tests for result table writing and loading."""
import io

import pytest

from matcap.csv_io import (
    CURVE_COLUMNS,
    FMC_COLUMNS,
    load_diagnostics,
    load_learning_curve,
    read_table,
    to_frame,
    write_csv,
)


def test_header_only_when_empty(tmp_path):
    path = write_csv(tmp_path / "fmc.csv", [], FMC_COLUMNS)
    assert path.read_bytes() == b"trial,i,J_i,cumulative\n"


def test_column_order_and_floats(tmp_path):
    path = write_csv(tmp_path / "fmc.csv", [{"J_i": 0.5625, "cumulative": 0.5625, "trial": 0, "i": 0}], FMC_COLUMNS)
    assert path.read_text(encoding="utf-8").splitlines() == ["trial,i,J_i,cumulative", "0,0,0.5625,0.5625"]


def test_unexpected_column():
    with pytest.raises(ValueError, match="Unexpected columns"):
        to_frame([{"trial": 0, "bogus": 1}], FMC_COLUMNS)


def test_read_checks_header():
    with pytest.raises(ValueError, match="Unexpected header"):
        read_table(io.StringIO("trial,i,value\n0,0,1\n"), FMC_COLUMNS)


def test_learning_curve_round_trip(tmp_path):
    rows = [{"iteration": i, "sequences": 16 * (i + 1), "bce": 0.69, "bit_error": 0.5} for i in range(3)]
    path = write_csv(tmp_path / "curve.csv", rows, CURVE_COLUMNS)
    assert load_learning_curve(path)["sequences"].tolist() == [16, 32, 48]


def test_learning_curve_duplicates():
    text = "iteration,sequences,bce,bit_error\n0,1,0.7,0.5\n0,2,0.6,0.4\n"
    with pytest.raises(ValueError, match="Duplicate iterations"):
        load_learning_curve(io.StringIO(text))


def test_diagnostics_head_names():
    text = "step,head,slot,weight\n0,read,0,1.0\n0,erase,0,1.0\n"
    with pytest.raises(ValueError, match="Unknown head names"):
        load_diagnostics(io.StringIO(text))
