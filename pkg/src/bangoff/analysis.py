"""Landscape scans, perturbation robustness, and ensemble distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .controls import BangOffControl, PiecewiseControl
from .errors import InvalidInputError, ResourceLimitError
from .model import ControlSystem
from .objective import CompiledSystem

LOG_BURES_FLOOR = 1e-16
LANDSCAPE_CELL_CAP = 100_000_000
PEAK_THRESHOLD = 0.05


@dataclass(frozen=True)
class LandscapeGrid:
    """Fidelity (or log10 Bures) values over a 2-d grid of durations.

    In "fixed" mode the third segment absorbs ``total - t1 - t2`` and
    cells with a negative remainder are NaN and never evaluated.
    """

    word: str
    axis1: np.ndarray
    axis2: np.ndarray
    mode: str
    total: float | None
    value_kind: str
    values: np.ndarray


def landscape(
    system: ControlSystem,
    word: str,
    axis1: tuple[float, float, int],
    axis2: tuple[float, float, int],
    mode: str = "free",
    total: float | None = None,
    value_kind: str = "fidelity",
    cell_cap: int = LANDSCAPE_CELL_CAP,
) -> LandscapeGrid:
    """Scan fidelity over (t1, t2) for a two- or three-segment type word."""
    if mode not in ("free", "fixed"):
        raise InvalidInputError(f"mode must be 'free' or 'fixed', got {mode!r}")
    if value_kind not in ("fidelity", "log_bures"):
        raise InvalidInputError(f"value_kind must be 'fidelity' or 'log_bures', got {value_kind!r}")
    if mode == "free" and len(word) != 2:
        raise InvalidInputError("free-total landscapes need a two-segment word")
    if mode == "fixed":
        if len(word) != 3:
            raise InvalidInputError("fixed-total landscapes need a three-segment word")
        if total is None or total <= 0:
            raise InvalidInputError("fixed-total landscapes need a positive total")
    t1 = np.linspace(*axis1)
    t2 = np.linspace(*axis2)
    if t1.size * t2.size > cell_cap:
        raise ResourceLimitError(f"{t1.size * t2.size} cells exceed the cap of {cell_cap}")
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise InvalidInputError("duration axes must be non-negative")

    compiled = CompiledSystem(system)
    values = np.full((t1.size, t2.size), np.nan)
    for i, a in enumerate(t1):
        if mode == "free":
            block = np.column_stack([np.full(t2.size, a), t2])
            fids = compiled.fidelity_word_batch(word, block)
            row = fids
        else:
            remainder = total - a - t2
            ok = remainder >= -1e-12
            if not ok.any():
                continue
            block = np.column_stack(
                [np.full(ok.sum(), a), t2[ok], np.clip(remainder[ok], 0.0, None)]
            )
            fids = compiled.fidelity_word_batch(word, block)
            row = np.full(t2.size, np.nan)
            row[ok] = fids
        if value_kind == "log_bures":
            with np.errstate(invalid="ignore"):
                db = np.sqrt(2.0 * (1.0 - np.sqrt(np.clip(row, 0.0, 1.0))))
                row = np.log10(np.maximum(db, LOG_BURES_FLOOR))
        values[i] = row
    return LandscapeGrid(
        word=word,
        axis1=t1,
        axis2=t2,
        mode=mode,
        total=total,
        value_kind=value_kind,
        values=values,
    )


@dataclass(frozen=True)
class RobustnessStats:
    sigma: float
    mode: str
    n_samples: int
    mean_error: float
    std_error: float


def robustness(
    system: ControlSystem,
    control: BangOffControl,
    mode: str,
    sigmas,
    n_samples: int = 10_000,
    seed: int = 0,
) -> list[RobustnessStats]:
    """Error statistics of a near-perfect control under Gaussian perturbations.

    ``mode='durations'`` perturbs every segment duration independently
    (negative draws are clipped to zero); ``mode='bound'`` perturbs the
    two bang magnitudes, one draw per sign per sample, leaving off
    segments untouched.
    """
    if mode not in ("durations", "bound"):
        raise InvalidInputError(f"mode must be 'durations' or 'bound', got {mode!r}")
    sigmas = [float(s) for s in np.atleast_1d(sigmas)]
    if any(s <= 0 for s in sigmas):
        raise InvalidInputError("perturbation scales must be positive")
    if n_samples < 1:
        raise InvalidInputError("need at least one sample")
    compiled = CompiledSystem(system)
    nominal_f = compiled.fidelity_word(control.word, control.durations)
    if nominal_f < 1.0 - 1e-9:
        raise InvalidInputError(
            f"control reaches only F={nominal_f!r}; robustness needs a near-perfect control"
        )
    nominal_values = control.segment_values()
    stats = []
    for s_idx, sigma in enumerate(sigmas):
        rng = np.random.default_rng([seed, s_idx])
        if mode == "durations":
            draws = rng.normal(
                loc=control.durations, scale=sigma, size=(n_samples, len(control.word))
            )
            fids = compiled.fidelity_word_batch(control.word, np.clip(draws, 0.0, None))
        else:
            plus = rng.normal(loc=control.bound, scale=sigma, size=n_samples)
            minus = rng.normal(loc=-control.bound, scale=sigma, size=n_samples)
            values = np.zeros((n_samples, len(control.word)))
            for j, ch in enumerate(control.word):
                if ch == "P":
                    values[:, j] = plus
                elif ch == "N":
                    values[:, j] = minus
            fids = compiled.fidelity_per_sample(values, control.durations)
        errors = 1.0 - fids
        stats.append(
            RobustnessStats(
                sigma=sigma,
                mode=mode,
                n_samples=n_samples,
                mean_error=float(errors.mean()),
                std_error=float(errors.std()),
            )
        )
    return stats


def loglog_slope(pairs) -> float:
    """Least-squares slope of log(error) against log(scale)."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    if len(pairs) < 3:
        raise InvalidInputError("need at least three points for a slope")
    if any(a <= 0 or b <= 0 for a, b in pairs):
        raise InvalidInputError("log-log slope needs strictly positive values")
    x = np.log([a for a, _ in pairs])
    y = np.log([b for _, b in pairs])
    return float(np.polyfit(x, y, 1)[0])


def count_peaks(counts: np.ndarray, threshold_fraction: float = PEAK_THRESHOLD) -> list[int]:
    """Indices of histogram peaks: local maxima above a fraction of the modal mass.

    Plateaus of equal counts are merged into a single peak at their first bin.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0 or counts.max() <= 0:
        return []
    threshold = threshold_fraction * counts.max()
    peaks = []
    i = 0
    n = counts.size
    while i < n:
        j = i
        while j + 1 < n and counts[j + 1] == counts[i]:
            j += 1
        left = counts[i - 1] if i > 0 else -np.inf
        right = counts[j + 1] if j + 1 < n else -np.inf
        if counts[i] > left and counts[i] > right and counts[i] >= threshold:
            peaks.append(i)
        i = j + 1
    return peaks


@dataclass(frozen=True)
class DistanceDistribution:
    distances: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    peak_positions: np.ndarray

    @property
    def peak_count(self) -> int:
        return self.peak_positions.size

    def matrix(self) -> np.ndarray:
        return squareform(self.distances)


def distance_distribution(controls) -> DistanceDistribution:
    """All pairwise mean-absolute distances of an ensemble, with a peak census."""
    controls = list(controls)
    if len(controls) < 2:
        raise InvalidInputError("need at least two controls")
    n_slots = controls[0].n_slots
    dt = controls[0].dt
    for c in controls:
        if not isinstance(c, PiecewiseControl):
            raise InvalidInputError("distance distributions operate on piecewise controls")
        if c.n_slots != n_slots or abs(c.dt - dt) > 1e-12 * max(1.0, dt):
            raise InvalidInputError("controls sit on different time grids")
    matrix = np.array([c.values for c in controls])
    distances = pdist(matrix, metric="cityblock") / n_slots
    if np.allclose(distances, distances[0]):
        edges = np.array([distances[0] - 0.5, distances[0] + 0.5])
        counts = np.array([distances.size])
        return DistanceDistribution(distances, edges, counts, np.array([distances[0]]))
    counts, edges = np.histogram(distances, bins="fd")
    centers = 0.5 * (edges[:-1] + edges[1:])
    peaks = count_peaks(counts)
    return DistanceDistribution(distances, edges, counts, centers[np.array(peaks, dtype=int)])
