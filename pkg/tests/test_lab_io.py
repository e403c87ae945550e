"""Tests for lab_io.py — CSV and JSON formats."""

import json

import numpy as np

from lab_io import read_empirical, read_outcomes, write_empirical, write_json, write_outcomes
from posterior import EmpiricalMeasureQ


def test_outcomes_file_layout(tmp_path):
    path = tmp_path / "a.csv"
    write_outcomes(str(path), [[1, 2, 2], [2, 1, 1]])
    assert path.read_text() == "a1,a2,a3\n1,2,2\n2,1,1\n"
    rows = read_outcomes(str(path))
    assert [r.values.tolist() for r in rows] == [[1, 2, 2], [2, 1, 1]]


def test_read_outcomes_ragged_rows(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("a1,a2,a3\n1,,\n2,1,\n1,1,2\n")
    assert [r.values.tolist() for r in read_outcomes(str(path))] == [[1], [2, 1], [1, 1, 2]]


def test_read_outcomes_empty(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    header = tmp_path / "header.csv"
    header.write_text("a1,a2\n")
    assert read_outcomes(str(empty)) == []
    assert read_outcomes(str(header)) == []


def test_read_outcomes_non_integer_row_is_flagged(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("a1,a2\n1,2\n2,yes\n1,,\n")
    rows = read_outcomes(str(path))
    assert [r.ok for r in rows] == [True, False, True]
    assert rows[1].values is None
    assert rows[1].error == "row 2 has a non-integer category at a2"
    assert rows[2].values.tolist() == [1]


def test_empirical_file_keeps_weights(tmp_path):
    path = tmp_path / "e.csv"
    e = EmpiricalMeasureQ([[0.25, 0.75], [0.6, 0.4]], [0.3, 0.7], {"n": 5, "M": 2})
    write_empirical(str(path), e)
    assert path.read_text().startswith("# n=5 M=2\ng1,g2,weight\n")
    again = read_empirical(str(path))
    assert np.array_equal(again.points, e.points)
    assert np.allclose(again.weights, e.weights, atol=1e-15)


def test_write_json_numpy_values(tmp_path):
    path = tmp_path / "doc.json"
    write_json(str(path), {"a": np.arange(3), "b": np.int64(4), "c": np.float64(0.5)})
    assert json.loads(path.read_text()) == {"a": [0, 1, 2], "b": 4, "c": 0.5}


def test_empirical_file_reads_back_exact_digits(tmp_path):
    path = tmp_path / "e.csv"
    points = np.array([[0.1, 0.9], [1.0 / 3.0, 2.0 / 3.0], [0.6, 0.4]])
    write_empirical(str(path), EmpiricalMeasureQ(points))
    again = read_empirical(str(path))
    assert np.array_equal(again.points, points)
    assert np.allclose(again.weights, 1.0 / 3.0, atol=1e-15)


def test_empirical_file_without_provenance(tmp_path):
    path = tmp_path / "e.csv"
    write_empirical(str(path), EmpiricalMeasureQ([[0.5, 0.5]]))
    assert path.read_text() == "g1,g2,weight\n0.5,0.5,1\n"
