"""CSV result tables with frozen headers."""
from __future__ import annotations

from pathlib import Path
from typing import IO, Any, Iterable, List, Mapping, Sequence

import pandas as pd

FMC_COLUMNS = ["trial", "i", "J_i", "cumulative"]
CAPACITY_COLUMNS = ["N", "trial", "J_tot", "J_tot_rel", "bound", "satisfied"]
MEM_FMC_COLUMNS = ["trial", "k", "J_prime_k", "cumulative", "J_tot_base", "ratio"]
BOUNDS_COLUMNS = [
    "trial", "J_tot", "input_fisher", "J_tot_rel", "normal",
    "normal_bound", "general_bound", "dyn_range_lhs", "dyn_range_rhs",
]
CURVE_COLUMNS = ["iteration", "sequences", "bce", "bit_error"]
SWEEP_COLUMNS = ["sweep_value", "mean_bce", "bit_error"]
DIAGNOSTICS_COLUMNS = ["step", "head", "slot", "weight"]
PARAMETER_COLUMNS = ["layer", "name", "shape", "count"]

FLOAT_FORMAT = "%.15g"


def to_frame(rows: Iterable[Mapping[str, Any]] | pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Rows in the documented column order; extra keys are an error."""
    if isinstance(rows, pd.DataFrame):
        frame = rows
    else:
        records = list(rows)
        frame = pd.DataFrame(records) if records else pd.DataFrame(columns=list(columns))
    unknown = [c for c in frame.columns if c not in columns]
    if unknown:
        raise ValueError(f"Unexpected columns: {', '.join(map(str, unknown))}")
    return frame.reindex(columns=list(columns))


def write_csv(path: Path | str, rows: Iterable[Mapping[str, Any]] | pd.DataFrame, columns: Sequence[str]) -> Path:
    """UTF-8, comma separated, ``\\n`` line ends; header only when there are no rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = to_frame(rows, columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def read_table(path: Path | str | IO[Any], columns: Sequence[str]) -> pd.DataFrame:
    """Load a result table and check its header matches exactly."""
    df = pd.read_csv(path)
    found: List[str] = [str(c) for c in df.columns]
    if found != list(columns):
        raise ValueError(f"Unexpected header: {','.join(found)} (expected {','.join(columns)})")
    return df


def load_learning_curve(path: Path | str | IO[Any]) -> pd.DataFrame:
    df = read_table(path, CURVE_COLUMNS)
    if df["iteration"].duplicated().any():
        dupes = df.loc[df["iteration"].duplicated(), "iteration"].astype(str).tolist()
        raise ValueError(f"Duplicate iterations: {', '.join(dupes)}")
    return df


def load_diagnostics(path: Path | str | IO[Any]) -> pd.DataFrame:
    df = read_table(path, DIAGNOSTICS_COLUMNS)
    bad = sorted(set(df["head"].astype(str)) - {"read", "write"})
    if bad:
        raise ValueError(f"Unknown head names: {', '.join(bad)}")
    return df
