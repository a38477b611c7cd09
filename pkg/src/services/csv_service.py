"""
CSV tables written and read by the CLI.

Every table has a header row; floats carry 12 significant digits and
missing values are written as `n/a`. Headers are part of the external
contract (see SCHEMA_VERSION in the manifest service).
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.analysis import summary_dicts
from src.ensemble import Curve, EnsembleResult, ScalarEstimate
from src.errors import InvalidArgumentError
from src.percolation import GrowthTrajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
NOT_AVAILABLE = "n/a"

CURVE_COLUMNS = ["m", "p", "mean", "stderr", "count"]
EIGENSTATE_COLUMNS = ["m", "p", "l", "mean", "stderr", "count"]
WRAP_COLUMNS = ["m", "mean", "stderr", "count"]
TRAJECTORY_COLUMNS = ["n", "p", "bond_id", "zeta", "wrapping"]


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=NOT_AVAILABLE, lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def curves_frame(curves: Dict[int, Curve]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({"m": curve.m, "p": curve.p, "mean": curve.mean,
                      "stderr": curve.stderr, "count": curve.count})
        for m, curve in sorted(curves.items())
    ]
    return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]


def eigenstate_frame(result: EnsembleResult, which: str) -> pd.DataFrame:
    """Long table of <xi_l> or <nu_l>: one row per (m, p, l), l 1-based."""
    frames = []
    for m, curves in sorted(result.eigenstats.items()):
        mean = getattr(curves, f"{which}_mean")
        stderr = getattr(curves, f"{which}_stderr")
        G, N = mean.shape
        frames.append(pd.DataFrame({
            "m": m,
            "p": np.repeat(curves.p, N),
            "l": np.tile(np.arange(1, N + 1), G),
            "mean": mean.ravel(),
            "stderr": stderr.ravel(),
            "count": curves.count,
        }))
    return pd.concat(frames, ignore_index=True)[EIGENSTATE_COLUMNS]


def heatmap_frame(result: EnsembleResult, m: int, which: str) -> pd.DataFrame:
    """Rows are eigenstates l, columns are grid bond fractions."""
    curves = result.eigenstats[m]
    mean = getattr(curves, f"{which}_mean")
    columns = [FLOAT_FORMAT % p for p in curves.p]
    frame = pd.DataFrame(mean.T, columns=columns)
    frame.insert(0, "l", np.arange(1, mean.shape[1] + 1))
    return frame


def wrap_frame(estimates: Dict[int, ScalarEstimate]) -> pd.DataFrame:
    rows = [{"m": m, "mean": e.mean, "stderr": e.stderr, "count": e.count}
            for m, e in sorted(estimates.items())]
    return pd.DataFrame(rows, columns=WRAP_COLUMNS)


def write_ensemble(result: EnsembleResult, out_dir: Path) -> List[Path]:
    out_dir = Path(out_dir)
    written: List[Path] = []
    for family, curves in result.curves.items():
        written.append(write_table(curves_frame(curves), out_dir / f"{family}.csv"))
    written.append(write_table(wrap_frame(result.wrap_fraction), out_dir / "p_w.csv"))
    if result.eigenstats:
        for which in ("xi", "nu"):
            written.append(write_table(eigenstate_frame(result, which), out_dir / f"{which}_l.csv"))
            for m in sorted(result.eigenstats):
                written.append(write_table(heatmap_frame(result, m, which),
                                           out_dir / f"{which}_l_heatmap_m{m}.csv"))
    logger.info("wrote %d tables to %s", len(written), out_dir)
    return written


def read_curves(path: Path, family: Optional[str] = None) -> Dict[int, Curve]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"curve file not found: {path}")
    frame = pd.read_csv(path)
    missing = set(CURVE_COLUMNS) - set(frame.columns)
    if missing:
        raise InvalidArgumentError(f"{path} lacks columns {sorted(missing)}")
    family = family or path.stem
    curves: Dict[int, Curve] = {}
    for m, group in frame.groupby("m", sort=True):
        group = group.sort_values("p", kind="stable")
        curves[int(m)] = Curve(
            family=family,
            m=int(m),
            p=group["p"].to_numpy(dtype=float),
            mean=group["mean"].to_numpy(dtype=float),
            stderr=group["stderr"].to_numpy(dtype=float),
            count=group["count"].to_numpy(dtype=int),
        )
    return curves


def read_wrap(path: Path) -> Dict[int, ScalarEstimate]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"wrapping file not found: {path}")
    frame = pd.read_csv(path)
    return {
        int(row.m): ScalarEstimate(mean=float(row.mean), stderr=float(row.stderr), count=int(row.count))
        for row in frame.itertuples(index=False)
    }


def trajectory_frame(trajectory: GrowthTrajectory) -> pd.DataFrame:
    """One row per growth step n = 1..B; bond ids are 1-based."""
    B = trajectory.topology.bond_count
    steps = np.arange(1, B + 1)
    return pd.DataFrame({
        "n": steps,
        "p": steps / B,
        "bond_id": np.asarray(trajectory.order, dtype=int) + 1,
        "zeta": trajectory.zeta[1:],
        "wrapping": trajectory.wrapping[1:].astype(int),
    })[TRAJECTORY_COLUMNS]


def table_frame(rows: Iterable[dict], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=list(columns))


SUMMARY_COLUMNS = ["m", "p_a", "p_b", "mu_at_p_b", "k", "p_w"]
DIAGNOSTICS_COLUMNS = [
    "m", "fit_lower", "fit_upper", "fit_points", "fit_p_min", "fit_p_max",
    "r_squared", "intercept", "zeta_crossover", "xi_avg_crossover",
]


def _optional_floats(frame: pd.DataFrame, integer_columns: Sequence[str]) -> pd.DataFrame:
    for column in frame.columns:
        if column not in integer_columns:
            frame[column] = frame[column].astype(float)
    return frame


def write_summary(rows: Sequence, diagnostics: Sequence, out_dir: Path) -> List[Path]:
    """`summary.csv` and `summary_diagnostics.csv`; undetermined values become `n/a`."""
    out_dir = Path(out_dir)
    summary = _optional_floats(table_frame(summary_dicts(rows), SUMMARY_COLUMNS), ["m"])
    details = _optional_floats(table_frame(summary_dicts(diagnostics), DIAGNOSTICS_COLUMNS),
                               ["m", "fit_points"])
    return [
        write_table(summary, out_dir / "summary.csv"),
        write_table(details, out_dir / "summary_diagnostics.csv"),
    ]
