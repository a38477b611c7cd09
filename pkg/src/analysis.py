"""
Post-processing of ensemble curves into the summary table.

Everything here is a pure function of `Curve` objects, so the summary can be
recomputed from the curve CSVs alone. Quantities that cannot be determined
are returned as None (serialized as `n/a`).
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import stats

from src.ensemble import Curve, ScalarEstimate
from src.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

ONSET_THRESHOLD = 0.01
FIT_WINDOW = (0.01, 0.1)
MIN_FIT_POINTS = 4
PERSISTENCE = 3
TIE_TOL = 1e-9


@dataclass(frozen=True)
class PowerLawFit:
    k: float
    intercept: float
    r_squared: float
    points: int
    p_min: float
    p_max: float


@dataclass(frozen=True)
class SummaryRow:
    m: int
    p_a: Optional[float]
    p_b: Optional[float]
    mu_at_p_b: Optional[float]
    k: Optional[float]
    p_w: Optional[float]


@dataclass(frozen=True)
class DiagnosticsRow:
    m: int
    fit_lower: float
    fit_upper: float
    fit_points: int
    fit_p_min: Optional[float]
    fit_p_max: Optional[float]
    r_squared: Optional[float]
    intercept: Optional[float]
    zeta_crossover: Optional[float]
    xi_avg_crossover: Optional[float]


def _check_same_grid(a: Curve, b: Curve) -> None:
    if a.p.shape != b.p.shape or not np.allclose(a.p, b.p, rtol=0.0, atol=1e-12):
        raise InvalidArgumentError(f"curves m={a.m} and m={b.m} are not on the same grid")


def detect_p_a(curve: Curve, threshold: float = ONSET_THRESHOLD) -> Optional[float]:
    """Smallest grid p with mean >= threshold."""
    hits = np.flatnonzero(curve.mean >= threshold)
    if hits.size == 0:
        return None
    return float(curve.p[hits[0]])


def detect_crossover(curve_m: Curve, curve_1: Curve, persistence: int = PERSISTENCE) -> Optional[float]:
    """
    Smallest grid p where curve_m strictly exceeds curve_1 and stays at or
    above it for the next `persistence` grid points.

    Differences below TIE_TOL count as ties (both curves sit at rounding
    noise around 0 on a sparse lattice and agree at p=1) and never start a
    crossing.
    """
    _check_same_grid(curve_m, curve_1)
    above = curve_m.mean >= curve_1.mean - TIE_TOL
    G = len(curve_m.p)
    for i in range(G - persistence):
        if curve_m.mean[i] > curve_1.mean[i] + TIE_TOL and above[i + 1:i + 1 + persistence].all():
            return float(curve_m.p[i])
    return None


def detect_p_b(curve_m: Curve, curve_1: Curve, persistence: int = PERSISTENCE) -> Optional[float]:
    if curve_m.m <= 1:
        return None
    return detect_crossover(curve_m, curve_1, persistence)


def _window_mask(curve: Curve, window: Tuple[float, float]) -> np.ndarray:
    lower, upper = window
    return (curve.p > 0) & (curve.mean >= lower) & (curve.mean <= upper)


def _window_points(curve: Curve) -> int:
    return int(_window_mask(curve, FIT_WINDOW).sum())


def fit_power_law(
    curve: Curve,
    window: Tuple[float, float] = FIT_WINDOW,
    min_points: int = MIN_FIT_POINTS,
) -> Optional[PowerLawFit]:
    """Least-squares fit of log(mean) against log(p) over the points with mean inside `window`."""
    mask = _window_mask(curve, window)
    if mask.sum() < min_points:
        logger.debug("m=%d: %d points in fit window, not fittable", curve.m, int(mask.sum()))
        return None
    p, mean = curve.p[mask], curve.mean[mask]
    fit = stats.linregress(np.log(p), np.log(mean))
    return PowerLawFit(
        k=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
        points=int(mask.sum()),
        p_min=float(p.min()),
        p_max=float(p.max()),
    )


def delta_efficiency(curve_1: Curve, curve_m: Curve) -> Curve:
    """<mu^1> - <mu^m>; negative where the correlated growth transports better."""
    _check_same_grid(curve_1, curve_m)
    return Curve(
        family="delta_mu_c",
        m=curve_m.m,
        p=curve_1.p.copy(),
        mean=curve_1.mean - curve_m.mean,
        stderr=np.hypot(curve_1.stderr, curve_m.stderr),
        count=np.minimum(curve_1.count, curve_m.count),
    )


def coherent_incoherent_gap(mu_i: Curve, mu_c: Curve) -> Curve:
    """<mu_i^m> - <mu_c^m>."""
    _check_same_grid(mu_i, mu_c)
    if mu_i.m != mu_c.m:
        raise InvalidArgumentError(f"gap needs curves of one m, got {mu_i.m} and {mu_c.m}")
    return Curve(
        family="gap",
        m=mu_c.m,
        p=mu_c.p.copy(),
        mean=mu_i.mean - mu_c.mean,
        stderr=np.hypot(mu_i.stderr, mu_c.stderr),
        count=np.minimum(mu_i.count, mu_c.count),
    )


def _value_at(curve: Curve, p: Optional[float]) -> Optional[float]:
    if p is None:
        return None
    index = int(np.argmin(np.abs(curve.p - p)))
    return float(curve.mean[index])


def _crossover_or_none(curves: Optional[Mapping[int, Curve]], m: int) -> Optional[float]:
    if not curves or m <= 1 or m not in curves or 1 not in curves:
        return None
    return detect_crossover(curves[m], curves[1])


def summarize(
    mu_c: Mapping[int, Curve],
    p_w: Mapping[int, ScalarEstimate],
    zeta: Optional[Mapping[int, Curve]] = None,
    xi_avg: Optional[Mapping[int, Curve]] = None,
) -> Tuple[List[SummaryRow], List[DiagnosticsRow]]:
    """Summary table row and fit diagnostics for every m of the coherent efficiency curves."""
    if not mu_c:
        raise InvalidArgumentError("no coherent efficiency curves to summarize")
    reference = mu_c.get(1)
    if reference is None:
        logger.warning("no m=1 curve; crossover points are reported as n/a")

    rows: List[SummaryRow] = []
    diagnostics: List[DiagnosticsRow] = []
    for m in sorted(mu_c):
        curve = mu_c[m]
        p_b = detect_p_b(curve, reference) if reference is not None else None
        fit = fit_power_law(curve)
        wrap = p_w.get(m)
        rows.append(SummaryRow(
            m=m,
            p_a=detect_p_a(curve),
            p_b=p_b,
            mu_at_p_b=_value_at(curve, p_b),
            k=fit.k if fit else None,
            p_w=wrap.mean if wrap is not None else None,
        ))
        diagnostics.append(DiagnosticsRow(
            m=m,
            fit_lower=FIT_WINDOW[0],
            fit_upper=FIT_WINDOW[1],
            fit_points=fit.points if fit else _window_points(curve),
            fit_p_min=fit.p_min if fit else None,
            fit_p_max=fit.p_max if fit else None,
            r_squared=fit.r_squared if fit else None,
            intercept=fit.intercept if fit else None,
            zeta_crossover=_crossover_or_none(zeta, m),
            xi_avg_crossover=_crossover_or_none(xi_avg, m),
        ))
        logger.info("m=%d: p_a=%s p_b=%s k=%s", m, rows[-1].p_a, rows[-1].p_b, rows[-1].k)
    return rows, diagnostics


def summary_dicts(rows: List) -> List[Dict]:
    return [asdict(row) for row in rows]
