"""Time-of-arrival observables derived from survival series.

The probability that the first detection happens at the n-th attempt is the
survival drop P_{n-1} - P_n (with P_0 = 1), so a stride-1 series converts to
the arrival-time distribution exactly, and the drops plus the terminal
survival telescope to 1. On top of that this module provides the standard
curve analyses: rescaling to x = t tau / N, log-log power-law fits, late-time
exponential rates and plateau estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import SurvivalSeries
from .errors import SeriesDataError
from .perturbation import ring_plateau

__all__ = [
    "ToaDistribution",
    "PowerLawFit",
    "PlateauEstimate",
    "CollapseResult",
    "toa_distribution",
    "scaling_collapse",
    "fit_power_law",
    "fit_late_exponential",
    "estimate_plateau",
    "power_law_crossover",
]


@dataclass
class ToaDistribution:
    """First-detection probabilities p_n per recorded step.

    ``undetected_mass`` is the survival left at the end of the run; on a
    ring this stays finite forever, which is why the conditional moments
    (over the detected fraction only) are reported next to it rather than
    as unconditional expectations. ``exact`` is False when the source series
    was recorded on a coarser-than-every-step grid, in which case each p
    lumps the detection mass of the whole gap onto its right edge.
    """

    steps: np.ndarray
    times: np.ndarray
    probabilities: np.ndarray
    undetected_mass: float
    exact: bool

    @property
    def detected_mass(self) -> float:
        return math.fsum(self.probabilities)

    @property
    def conditional_mean_toa(self) -> float:
        return self.conditional_moment(1)

    def conditional_moment(self, order: int) -> float:
        """Raw moment of the arrival time over the detected fraction."""
        detected = self.detected_mass
        if detected <= 0.0:
            raise SeriesDataError("no detection mass: conditional moments undefined")
        return float(np.sum(self.probabilities * self.times ** order) / detected)


@dataclass
class PowerLawFit:
    """Least-squares line in (log x, log y): y ~ amplitude * x^exponent."""

    exponent: float
    amplitude: float
    fit_window: tuple[float, float]
    residual: float
    n_points: int


@dataclass
class PlateauEstimate:
    """Mean survival over the trailing window of a series, with its spread."""

    value: float
    spread: float
    t_lo: float
    t_hi: float
    n_points: int


@dataclass
class CollapseResult:
    """Curves rescaled to x = t tau / N plus a collapse-quality metric.

    ``max_log_deviation`` is the largest pairwise |log P_i(x) - log P_j(x)|
    over the common x range (0 for a single curve).
    """

    key: tuple[str, str]
    labels: list[str]
    curves: list[tuple[np.ndarray, np.ndarray]]
    max_log_deviation: float

    @property
    def max_relative_deviation(self) -> float:
        return float(np.expm1(self.max_log_deviation))


def _validate_survival(p: np.ndarray):
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise SeriesDataError("survival values must lie in [0, 1]")
    if np.any(np.diff(p) > 0.0):
        raise SeriesDataError("survival series must be non-increasing")


def toa_distribution(series: SurvivalSeries) -> ToaDistribution:
    """Survival drops P_{n-1} - P_n per recorded step, with P_0 = 1.

    The drops are non-negative for any valid (monotone) series and, together
    with the terminal survival, sum to 1 up to a single rounding per term.
    """
    if len(series) == 0:
        raise SeriesDataError("empty series")
    p = np.asarray(series.survival, dtype=float)
    _validate_survival(p)
    drops = -np.diff(np.concatenate(([1.0], p)))
    exact = series.steps[0] == 1 and np.all(np.diff(series.steps) == 1)
    return ToaDistribution(
        steps=series.steps.copy(),
        times=series.times.copy(),
        probabilities=drops,
        undetected_mass=float(p[-1]),
        exact=bool(exact),
    )


def _series_site(series: SurvivalSeries) -> int:
    kind, _, arg = series.initial.partition(":")
    if kind != "pos":
        raise SeriesDataError(
            f"scaling collapse is defined for position initial states, got {series.initial!r}"
        )
    return int(arg)


def scaling_collapse(series_list, window=None) -> CollapseResult:
    """Rescale survival curves to x = t tau / N and score their overlap.

    All series must share the boundary type and release-site class: either a
    common bulk ratio site/N or a common boundary distance site. Ring curves
    are collapsed as the excess over their plateau. ``window=(x_lo, x_hi)``
    restricts the comparison range; by default the full common range is used.
    """
    series_list = list(series_list)
    if not series_list:
        raise SeriesDataError("scaling collapse needs at least one series")
    boundary = series_list[0].boundary
    if any(s.boundary != boundary for s in series_list):
        raise SeriesDataError("all series must share the boundary type")
    sites = [_series_site(s) for s in series_list]
    ratios = [site / s.n_sites for site, s in zip(sites, series_list)]
    if all(abs(r - ratios[0]) < 1e-9 for r in ratios):
        label = f"bulk site/N={ratios[0]:g}"
    elif all(site == sites[0] for site in sites):
        label = f"boundary site={sites[0]}"
    else:
        raise SeriesDataError("series mix release-site classes (neither site/N nor site is shared)")

    labels, curves = [], []
    for s, site in zip(series_list, sites):
        plateau = ring_plateau(s.n_sites, site) if boundary == "ring" else 0.0
        labels.append(f"N={s.n_sites} tau={s.tau:g}")
        curves.append((s.x, np.asarray(s.survival, dtype=float) - plateau))

    if len(curves) == 1:
        return CollapseResult((boundary, label), labels, curves, 0.0)

    x_lo = max(c[0][c[1] > 0].min() for c in curves)
    x_hi = min(c[0][c[1] > 0].max() for c in curves)
    if window is not None:
        x_lo, x_hi = max(x_lo, window[0]), min(x_hi, window[1])
    if not x_hi > x_lo:
        raise SeriesDataError("curves share no positive common x range")
    grid = np.logspace(np.log10(x_lo), np.log10(x_hi), 200)
    logs = []
    for x, y in curves:
        keep = y > 0
        logs.append(np.interp(np.log(grid), np.log(x[keep]), np.log(y[keep])))
    logs = np.asarray(logs)
    deviation = float(np.max(logs.max(axis=0) - logs.min(axis=0)))
    return CollapseResult((boundary, label), labels, curves, deviation)


def fit_power_law(series: SurvivalSeries, window: tuple[float, float],
                  plateau: float = 0.0) -> PowerLawFit:
    """Fit (P - plateau) ~ amplitude * x^exponent inside an x window.

    Unweighted least squares on the log-log points; log-spaced recording
    already equalizes per-decade point density. Needs at least 8 points, all
    positive after plateau subtraction.
    """
    x = series.x
    y = np.asarray(series.survival, dtype=float) - plateau
    keep = (x >= window[0]) & (x <= window[1])
    if keep.sum() < 8:
        raise SeriesDataError(f"power-law fit needs >= 8 points in the window, found {keep.sum()}")
    if np.any(y[keep] <= 0.0):
        raise SeriesDataError("nonpositive values after plateau subtraction inside the window")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return PowerLawFit(float(slope), float(np.exp(intercept)),
                       (float(window[0]), float(window[1])), residual, int(keep.sum()))


def fit_late_exponential(series: SurvivalSeries, t_min: float) -> float:
    """Decay rate from the slope of log P versus t over [t_min, end]."""
    t = series.times
    p = np.asarray(series.survival, dtype=float)
    keep = (t >= t_min) & (p > 0.0)
    if keep.sum() < 4:
        raise SeriesDataError(f"late-exponential fit needs >= 4 points past t_min, found {keep.sum()}")
    slope, _ = np.polyfit(t[keep], np.log(p[keep]), 1)
    return float(-slope)


def estimate_plateau(series: SurvivalSeries, tail_fraction: float = 0.25) -> PlateauEstimate:
    """Average survival over the trailing fraction of records.

    The tail window must span at least a decade in t so a still-decaying
    curve cannot masquerade as a plateau.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise SeriesDataError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    k = max(2, int(round(tail_fraction * len(series))))
    t = series.times[-k:]
    p = np.asarray(series.survival[-k:], dtype=float)
    if t[0] <= 0 or t[-1] / t[0] < 10.0:
        raise SeriesDataError(
            f"insufficient tail: trailing window spans t = {t[0]:g}..{t[-1]:g}, less than a decade"
        )
    return PlateauEstimate(
        value=float(np.mean(p)),
        spread=float(p.max() - p.min()),
        t_lo=float(t[0]),
        t_hi=float(t[-1]),
        n_points=int(k),
    )


def power_law_crossover(fit_a: PowerLawFit, fit_b: PowerLawFit) -> float:
    """x where the two fitted asymptotes intersect: the empirical crossover
    location between regimes (no sharper definition exists)."""
    if fit_a.exponent == fit_b.exponent:
        raise SeriesDataError("parallel power laws have no crossover")
    return float((fit_b.amplitude / fit_a.amplitude) ** (1.0 / (fit_a.exponent - fit_b.exponent)))
