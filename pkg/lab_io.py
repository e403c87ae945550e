"""
lab_io.py — CSV and JSON files the lab reads and writes.

All CSVs use '.' decimals, 17 significant digits and '\\n' line endings so
two runs with the same seed produce byte-identical files.
"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from converge import ConvergenceCurve
from hellinger import PairScan
from identify import CovarianceBlock
from posterior import EmpiricalMeasureQ

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _ensure_dir(path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _to_csv(df: pd.DataFrame, path: str, header_comment: str | None = None, **kwargs):
    _ensure_dir(path)
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        df.to_csv(f, float_format=FLOAT_FORMAT, lineterminator="\n", **kwargs)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Not JSON serializable: {type(obj).__name__}")


def write_json(path: str, doc: dict):
    _ensure_dir(path)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, default=_json_default)
        f.write("\n")


# ------------------------------------------------------------------
# Outcome sequences
# ------------------------------------------------------------------

def write_outcomes(path: str, sequences):
    """One row per sequence, columns a1..an."""
    arr = np.atleast_2d(np.asarray(sequences, dtype=int))
    df = pd.DataFrame(arr, columns=[f"a{j + 1}" for j in range(arr.shape[1])])
    _to_csv(df, path, index=False)


@dataclass
class OutcomeRow:
    """One parsed row; values is None when the row could not be read."""
    values: np.ndarray | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.values is not None


def read_outcomes(path: str) -> list[OutcomeRow]:
    """
    Rows of an a1..an CSV, in file order.

    Trailing empty cells shorten a row. An empty file or a header-only file
    gives no rows. A row with a non-integer cell (or a gap before the last
    filled cell) comes back with an error and no values; the other rows are
    unaffected.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return []
    rows = []
    for r, values in enumerate(df.itertuples(index=False), start=1):
        cells = [v.strip() for v in values]
        while cells and cells[-1] == "":
            cells.pop()
        try:
            rows.append(OutcomeRow(np.array([int(c) for c in cells], dtype=int)))
        except ValueError:
            bad = next(j for j, c in enumerate(cells, start=1) if not _is_int(c))
            logger.warning(f"{path}: row {r} has a non-integer category at a{bad}")
            rows.append(OutcomeRow(None, f"row {r} has a non-integer category at a{bad}"))
    return rows


def _is_int(cell: str) -> bool:
    try:
        int(cell)
    except ValueError:
        return False
    return True


# ------------------------------------------------------------------
# Measures, scans, covariance, curves
# ------------------------------------------------------------------

def write_empirical(path: str, e: EmpiricalMeasureQ):
    """Columns g1..gK, weight; provenance on a leading '#' line."""
    df = pd.DataFrame(e.points, columns=[f"g{k + 1}" for k in range(e.K)])
    df["weight"] = e.weights
    provenance = " ".join(f"{k}={v}" for k, v in e.provenance.items())
    _to_csv(df, path, header_comment=provenance, index=False)


def read_empirical(path: str) -> EmpiricalMeasureQ:
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    weights = df.pop("weight").to_numpy(dtype=float)
    return EmpiricalMeasureQ(df.to_numpy(dtype=float), weights / weights.sum())


def write_verdicts(path: str, scan: PairScan):
    """Verdict matrix; row and column labels are grid indices."""
    n = len(scan.grid)
    df = pd.DataFrame(scan.verdicts, index=range(n), columns=[str(i) for i in range(n)])
    _to_csv(df, path, index_label="i")


def write_covariance(path: str, block: CovarianceBlock):
    df = pd.DataFrame(block.matrix, index=block.labels, columns=block.labels)
    _to_csv(df, path, index_label="index")


def write_curve(path: str, curve: ConvergenceCurve):
    df = pd.DataFrame({
        "n": [r.n for r in curve.rows],
        "M": [r.M for r in curve.rows],
        "R": [r.R for r in curve.rows],
        "metric": curve.metric,
        "mean_distance": curve.means,
        "stderr": curve.stderrs,
    })
    _to_csv(df, path, index=False)


def write_posteriors(path: str, records: list[dict], K: int):
    """One row per input sequence: e1..eK, top atom and its mass, error text."""
    columns = ["row", "n"] + [f"e{k + 1}" for k in range(K)] + ["top_atom", "top_mass", "error"]
    df = pd.DataFrame.from_records(records, columns=columns)
    _to_csv(df, path, index=False)
