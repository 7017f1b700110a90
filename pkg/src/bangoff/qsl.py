"""Systematic estimation of the quantum speed limit.

For each switch count the minimal duration at which perfect fidelity
(1 - delta) becomes reachable is located by bisection.  Probes maximize
fidelity over controls whose total duration fits *within* the probed
budget: feasibility of "some control no longer than T" is monotone in T,
whereas fidelity at exactly T is not (perfect transfer can exist only at
isolated totals), so budget probes are what make bisection sound.  The
search stops once an extra switch neither shortens the minimal duration
nor keeps all of its segments active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controls import (
    BangOffControl,
    Pruning,
    enumerate_types,
    format_word,
    negate_word,
)
from .errors import BracketingError, InvalidInputError, ResourceLimitError
from .model import ControlSystem
from .objective import CompiledSystem
from .optimize import derive_seed, polish_durations, sd_durations_batch

GRID_CELL_CAP = 100_000_000


@dataclass(frozen=True)
class SearchBudget:
    """Effort knobs for one fidelity maximization over a type word."""

    starts: int = 20
    sd_iterations: int = 2000
    polish_top: int = 3
    seed: int = 0


@dataclass(frozen=True)
class TypeSearchResult:
    word: str
    fidelity: float
    durations: np.ndarray


@dataclass(frozen=True)
class BestFidelityResult:
    """Outcome of a per-switch-count search at one duration."""

    fidelity: float
    word: str
    durations: np.ndarray
    per_type: dict[str, TypeSearchResult]
    pruning: Pruning

    def optimal_words(self, slack: float = 1e-9, mirror_expand: bool = True) -> list[str]:
        """All searched words within `slack` of the best, mirror pairs included."""
        words = [w for w, r in self.per_type.items() if r.fidelity >= self.fidelity - slack]
        if mirror_expand and self.pruning.mirror_reduce:
            words = sorted(set(words) | {negate_word(w) for w in words})
        return words


def _vertex_candidates(n_segments: int, total: float) -> np.ndarray:
    return np.eye(n_segments) * total


def _search_word(
    compiled: CompiledSystem,
    word: str,
    total: float,
    budget: SearchBudget,
    seed: int,
    max_total: bool,
    warm_starts: list[np.ndarray],
) -> TypeSearchResult:
    """Multi-start SD plus quasi-Newton polish for one type word."""
    n_seg = len(word)
    n_coords = n_seg + 1 if max_total else n_seg

    def objective_batch(matrix: np.ndarray) -> np.ndarray:
        return compiled.fidelity_word_batch(word, matrix[:, :n_seg])

    candidates: list[np.ndarray] = []
    if n_coords > 1:
        points, _ = sd_durations_batch(
            objective_batch, n_coords, total, budget.starts, budget.sd_iterations, seed
        )
        candidates.extend(points[:, :n_seg])
    vertices = _vertex_candidates(n_seg, total)
    candidates.extend(vertices)
    for warm in warm_starts:
        warm = np.clip(np.asarray(warm, dtype=float), 0.0, None)
        s = warm.sum()
        if s > total and s > 0:
            warm = warm * (total / s)
        candidates.extend([warm])
    pool = np.array(candidates)
    if not max_total:
        # renormalize every candidate onto the fixed-total simplex
        sums = pool.sum(axis=1, keepdims=True)
        pool = np.where(sums > 0, pool * (total / sums), 0.0)
        if n_seg == 1:
            pool = np.full((1, 1), total)
    fids = compiled.fidelity_word_batch(word, pool)
    order = np.argsort(-fids)

    best_t = pool[order[0]]
    best_f = float(fids[order[0]])
    for idx in order[: budget.polish_top]:
        start = pool[idx]
        if not max_total:
            polished, f = polish_durations(compiled, word, start, total, fixed_total=True)
        else:
            polished, f = polish_durations(compiled, word, start, total, fixed_total=False)
        if f > best_f:
            best_f, best_t = float(f), polished
    return TypeSearchResult(word=word, fidelity=best_f, durations=np.asarray(best_t, float))


def best_fidelity_at(
    system: ControlSystem,
    n_switches: int,
    total: float,
    budget: SearchBudget | None = None,
    pruning: Pruning | None = None,
    max_total: bool = False,
    compiled: CompiledSystem | None = None,
    warm_starts: dict[str, list[np.ndarray]] | None = None,
    stop_at: float | None = None,
    word_order_hint: dict[str, float] | None = None,
) -> BestFidelityResult:
    """Best fidelity over all type words with the given switch count.

    With ``max_total=True`` the optimization runs over controls whose
    total duration is at most `total` (the budget probe used by the
    speed-limit bisection); otherwise durations are constrained to sum
    to `total` exactly.  ``stop_at`` allows early exit once some word
    reaches the threshold, in which case the per-type table only covers
    the words inspected so far.
    """
    if not total > 0:
        raise InvalidInputError(f"duration must be positive, got {total}")
    budget = budget or SearchBudget()
    pruning = Pruning.for_system(system) if pruning is None else pruning
    compiled = compiled or CompiledSystem(system)
    warm_starts = warm_starts or {}
    words = enumerate_types(n_switches, pruning)
    if word_order_hint:
        words = sorted(words, key=lambda w: -word_order_hint.get(w, -math.inf))

    per_type: dict[str, TypeSearchResult] = {}
    best: TypeSearchResult | None = None
    for j, word in enumerate(words):
        seed = derive_seed(budget.seed, j)
        result = _search_word(
            compiled, word, total, budget, seed, max_total, warm_starts.get(word, [])
        )
        per_type[word] = result
        if best is None or result.fidelity > best.fidelity:
            best = result
        if stop_at is not None and best.fidelity >= stop_at:
            break
    return BestFidelityResult(
        fidelity=best.fidelity,
        word=best.word,
        durations=best.durations,
        per_type=per_type,
        pruning=pruning,
    )


@dataclass(frozen=True)
class MinDurationResult:
    t_min: float
    witness: BangOffControl
    fidelity: float
    probes: tuple[tuple[float, float], ...]


def min_duration(
    system: ControlSystem,
    n_switches: int,
    delta: float,
    bracket: tuple[float, float],
    tol: float = 1e-4,
    budget: SearchBudget | None = None,
    pruning: Pruning | None = None,
    compiled: CompiledSystem | None = None,
) -> MinDurationResult:
    """Bisect for the smallest duration budget reaching fidelity 1 - delta."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 <= lo < hi):
        raise InvalidInputError(f"invalid bracket {bracket}")
    budget = budget or SearchBudget()
    pruning = Pruning.for_system(system) if pruning is None else pruning
    compiled = compiled or CompiledSystem(system)
    threshold = 1.0 - delta

    overlap0 = abs(np.vdot(system.target, system.initial)) ** 2
    if overlap0 >= threshold:
        witness = BangOffControl(word="Z", durations=np.array([0.0]), bound=system.bound)
        return MinDurationResult(0.0, witness, float(overlap0), ((0.0, float(overlap0)),))

    probes: list[tuple[float, float]] = []
    hints: dict[str, float] = {}
    witness: TypeSearchResult | None = None

    def probe(T: float) -> tuple[bool, TypeSearchResult | None]:
        warm = {}
        if witness is not None:
            warm = {witness.word: [witness.durations]}
        res = best_fidelity_at(
            system,
            n_switches,
            T,
            budget=budget,
            pruning=pruning,
            max_total=True,
            compiled=compiled,
            warm_starts=warm,
            stop_at=threshold,
            word_order_hint=hints or None,
        )
        for w, r in res.per_type.items():
            hints[w] = max(hints.get(w, -math.inf), r.fidelity)
        probes.append((T, res.fidelity))
        if res.fidelity >= threshold:
            return True, res.per_type[res.word]
        return False, None

    feasible_hi, witness = probe(hi)
    if not feasible_hi:
        raise BracketingError(
            f"no control with {n_switches} switches reaches 1-{delta:g} within duration {hi}"
        )
    feasible_lo, w_lo = probe(lo) if lo > 0 else (False, None)
    if feasible_lo:
        witness = w_lo
        hi = lo
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            ok, w_mid = probe(mid)
            if ok:
                witness, hi = w_mid, mid
            else:
                lo = mid
    total = float(np.sum(witness.durations))
    control = BangOffControl(word=witness.word, durations=witness.durations, bound=system.bound)
    return MinDurationResult(
        t_min=min(hi, total) if total > 0 else hi,
        witness=control,
        fidelity=witness.fidelity,
        probes=tuple(probes),
    )


@dataclass(frozen=True)
class QslReport:
    """Per-switch-count minimal durations and the resulting speed-limit estimate."""

    t_min_by_ns: dict[int, float | None]
    qsl_estimate: float | None
    stop_level: int | None
    optimal_types: tuple[str, ...]
    optimal_durations: tuple[tuple[float, ...], ...]
    delta: float
    tol: float
    zero_threshold: float
    converged: bool
    witness_fidelities: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "t_min_by_ns": {str(k): v for k, v in self.t_min_by_ns.items()},
            "qsl_estimate": self.qsl_estimate,
            "stop_level": self.stop_level,
            "optimal_types": [format_word(w) for w in self.optimal_types],
            "optimal_durations": [list(d) for d in self.optimal_durations],
            "witness_fidelities": list(self.witness_fidelities),
            "delta": self.delta,
            "tol": self.tol,
            "zero_threshold": self.zero_threshold,
            "converged": self.converged,
        }


def estimate_qsl(
    system: ControlSystem,
    delta: float = 1e-9,
    ns_max: int = 6,
    tol: float = 1e-4,
    t_cap: float = 4.0,
    budget: SearchBudget | None = None,
    zero_threshold: float = 1e-6,
) -> QslReport:
    """Run the per-switch-count minimal-duration scheme until it stabilizes.

    Levels that cannot reach fidelity 1 - delta within `t_cap` are
    recorded as infeasible.  The scheme stops at the first level whose
    successor neither improves the minimal duration by more than `tol`
    nor keeps all its segment durations above `zero_threshold`; the
    estimate is that level's minimal duration.
    """
    if ns_max < 1:
        raise InvalidInputError("ns_max must be >= 1")
    budget = budget or SearchBudget()
    pruning = Pruning.for_system(system)
    compiled = CompiledSystem(system)
    threshold = 1.0 - delta

    t_min: dict[int, float | None] = {}
    witnesses: dict[int, MinDurationResult] = {}
    stop_level: int | None = None
    for level in range(ns_max + 1):
        feas = best_fidelity_at(
            system,
            level,
            t_cap,
            budget=budget,
            pruning=pruning,
            max_total=True,
            compiled=compiled,
            stop_at=threshold,
        )
        if feas.fidelity < threshold:
            t_min[level] = None
            continue
        result = min_duration(
            system,
            level,
            delta,
            (0.0, t_cap),
            tol=tol / 4.0,
            budget=budget,
            pruning=pruning,
            compiled=compiled,
        )
        t_min[level] = result.t_min
        witnesses[level] = result
        prev = level - 1
        if prev in witnesses and t_min[prev] is not None:
            collapsed = float(np.min(result.witness.durations)) <= zero_threshold
            if abs(t_min[level] - t_min[prev]) <= tol and collapsed:
                stop_level = prev
                break

    if stop_level is None:
        feasible_levels = [k for k, v in t_min.items() if v is not None]
        last = feasible_levels[-1] if feasible_levels else None
        return QslReport(
            t_min_by_ns=t_min,
            qsl_estimate=t_min[last] if last is not None else None,
            stop_level=last,
            optimal_types=(),
            optimal_durations=(),
            delta=delta,
            tol=tol,
            zero_threshold=zero_threshold,
            converged=False,
        )

    qsl = t_min[stop_level]
    final = best_fidelity_at(
        system,
        stop_level,
        qsl,
        budget=budget,
        pruning=pruning,
        max_total=True,
        compiled=compiled,
        warm_starts={witnesses[stop_level].witness.word: [witnesses[stop_level].witness.durations]},
    )
    optimal_words = [
        w for w, r in final.per_type.items() if r.fidelity >= threshold
    ]
    optimal_words.sort()
    durations = [tuple(float(x) for x in final.per_type[w].durations) for w in optimal_words]
    fids = [final.per_type[w].fidelity for w in optimal_words]
    if pruning.mirror_reduce:
        mirrored = [negate_word(w) for w in optimal_words]
        optimal_words = optimal_words + mirrored
        durations = durations + durations
        fids = fids + fids
    return QslReport(
        t_min_by_ns=t_min,
        qsl_estimate=qsl,
        stop_level=stop_level,
        optimal_types=tuple(optimal_words),
        optimal_durations=tuple(durations),
        delta=delta,
        tol=tol,
        zero_threshold=zero_threshold,
        converged=True,
        witness_fidelities=tuple(fids),
    )


def grid_oracle(
    system: ControlSystem,
    word: str,
    total: float,
    resolution: int,
    cell_cap: int = GRID_CELL_CAP,
) -> tuple[float, np.ndarray]:
    """Exhaustive fixed-total scan over the duration simplex grid.

    The first n_switches durations take values k * total / resolution and
    the last absorbs the remainder.  Serves as the brute-force oracle the
    optimizers are validated against.
    """
    if resolution < 2:
        raise InvalidInputError("resolution must be >= 2")
    if not total > 0:
        raise InvalidInputError(f"duration must be positive, got {total}")
    n_free = len(word) - 1
    n_cells = math.comb(resolution + n_free, n_free)
    if n_cells > cell_cap:
        raise ResourceLimitError(
            f"grid of {n_cells} cells exceeds the cap of {cell_cap}"
        )
    compiled = CompiledSystem(system)
    if n_free == 0:
        durations = np.array([total])
        return compiled.fidelity_word(word, durations), durations

    step = total / resolution
    best_f = -1.0
    best = None
    counts = np.arange(resolution + 1)

    def emit_blocks():
        if n_free == 1:
            t1 = counts * step
            yield np.column_stack([t1, total - t1])
            return
        # iterate over all but the last free axis, vectorize the last one
        from itertools import product as iproduct

        prefix_axes = n_free - 1
        for prefix in iproduct(range(resolution + 1), repeat=prefix_axes):
            used = sum(prefix)
            if used > resolution:
                continue
            k_last = np.arange(resolution - used + 1)
            block = np.empty((k_last.size, n_free + 1))
            for a, k in enumerate(prefix):
                block[:, a] = k * step
            block[:, n_free - 1] = k_last * step
            block[:, n_free] = total - used * step - k_last * step
            yield block

    for block in emit_blocks():
        np.clip(block[:, -1], 0.0, None, out=block[:, -1])
        fids = compiled.fidelity_word_batch(word, block)
        j = int(np.argmax(fids))
        if fids[j] > best_f:
            best_f = float(fids[j])
            best = block[j].copy()
    return best_f, best


@dataclass(frozen=True)
class CriticalTimeReport:
    t_c: float
    epsilon: float
    bracket: tuple[float, float]
    gap_low: float
    gap_high: float


def critical_time(
    system: ControlSystem,
    epsilon: float = 1e-10,
    bracket: tuple[float, float] = (0.4, 1.2),
    tol: float = 1e-4,
    budget: SearchBudget | None = None,
) -> CriticalTimeReport:
    """Locate where one switch first beats the single-bang control.

    Bisects on the predicate F1(T) - F0(T) > epsilon, where F0/F1 are the
    best fidelities with zero/one switch at exact duration T.  The
    default epsilon sits just above the refinement noise floor (~1e-12)
    because the fidelity gap grows slowly past the transition; a larger
    threshold would place the detected crossing visibly late.
    """
    budget = budget or SearchBudget()
    pruning = Pruning.for_system(system)
    compiled = CompiledSystem(system)

    def gap(T: float) -> float:
        f0 = best_fidelity_at(
            system, 0, T, budget=budget, pruning=pruning, compiled=compiled
        ).fidelity
        f1 = best_fidelity_at(
            system, 1, T, budget=budget, pruning=pruning, compiled=compiled
        ).fidelity
        return max(f1, f0) - f0

    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 < lo < hi):
        raise InvalidInputError(f"invalid bracket {bracket}")
    gap_lo = gap(lo)
    gap_hi = gap(hi)
    if gap_lo > epsilon or gap_hi <= epsilon:
        raise BracketingError(
            f"gap is {gap_lo:.3e} at {lo} and {gap_hi:.3e} at {hi}; "
            f"the predicate > {epsilon:g} does not change across the bracket"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gap_mid = gap(mid)
        if gap_mid > epsilon:
            hi, gap_hi = mid, gap_mid
        else:
            lo, gap_lo = mid, gap_mid
    return CriticalTimeReport(
        t_c=hi, epsilon=epsilon, bracket=(lo, hi), gap_low=gap_lo, gap_high=gap_hi
    )


def fidelity_vs_total(
    system: ControlSystem,
    n_switches: int,
    totals,
    budget: SearchBudget | None = None,
) -> list[tuple[float, float, str]]:
    """Best fidelity per grid duration, for sweep plots and CSV export."""
    totals = np.asarray(totals, dtype=float)
    if totals.ndim != 1 or totals.size == 0:
        raise InvalidInputError("duration grid must be a non-empty 1-d array")
    if np.any(totals <= 0) or np.any(np.diff(totals) <= 0):
        raise InvalidInputError("duration grid must be positive and strictly increasing")
    budget = budget or SearchBudget()
    pruning = Pruning.for_system(system)
    compiled = CompiledSystem(system)
    rows = []
    warm: dict[str, np.ndarray] = {}
    for T in totals:
        scaled = {}
        for w, d in warm.items():
            s = d.sum()
            if s > 0:
                scaled[w] = [d * (float(T) / s)]
        res = best_fidelity_at(
            system,
            n_switches,
            float(T),
            budget=budget,
            pruning=pruning,
            compiled=compiled,
            warm_starts=scaled,
        )
        for w, r in res.per_type.items():
            warm[w] = r.durations
        rows.append((float(T), res.fidelity, res.word))
    return rows
