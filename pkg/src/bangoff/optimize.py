"""Optimizers over control parameterizations.

All searches accept a candidate only on strict improvement, so traces of
the Bures distance are non-increasing by construction.  Every routine
owns its random stream through an explicit integer seed; repeated runs
with the same seed are identical, and multi-start drivers derive one
child seed per point so results do not depend on execution order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from .controls import (
    BangOffControl,
    Control,
    CrabControl,
    PiecewiseControl,
    random_durations,
    validate_word,
)
from .errors import InvalidInputError
from .model import ControlSystem
from .objective import CompiledSystem, bures_distance


@dataclass(frozen=True)
class SdConfig:
    """Stochastic-descent settings.

    ``initial_step`` defaults to T/20 at run time; the step halves after
    ``patience`` consecutive rejections and the run stops once it falls
    below ``min_step`` or the iteration budget is spent.
    """

    iterations: int = 10_000
    initial_step: float | None = None
    step_decay: float = 0.5
    patience: int = 200
    min_step: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not (0.0 < self.step_decay < 1.0):
            raise InvalidInputError("step_decay must lie in (0, 1)")
        if self.min_step <= 0:
            raise InvalidInputError("min_step must be positive")


@dataclass(frozen=True)
class OptimizationResult:
    """Best control found by one optimization run."""

    best_control: Control
    best_fidelity: float
    trace: tuple[tuple[int, float], ...]
    iterations_used: int
    seed: int
    converged: bool

    @property
    def best_bures(self) -> float:
        return bures_distance(self.best_fidelity)


def derive_seed(master_seed: int, index: int) -> int:
    """Deterministic child seed for point `index` of a multi-start run."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _map_indexed(worker, n_items: int, threads: int = 1) -> list:
    """worker(i) for i in range(n_items), optionally on a thread pool.

    Results are collected by index, so the outcome does not depend on
    the pool size.
    """
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, range(n_items)))
    return [worker(i) for i in range(n_items)]


def multi_start(n_points: int, worker, master_seed: int, threads: int = 1) -> list[OptimizationResult]:
    """Run `worker(seed)` for one derived seed per point, in index order."""
    if n_points < 1:
        raise InvalidInputError("n_points must be >= 1")
    seeds = [derive_seed(master_seed, i) for i in range(n_points)]
    return _map_indexed(lambda i: worker(seeds[i]), n_points, threads)


# ---------------------------------------------------------------------------
# stochastic descent over bang-off durations
# ---------------------------------------------------------------------------


def _propose(t: np.ndarray, k: int, delta: float, total: float):
    """Shift coordinate k and rescale the rest onto the fixed-total simplex."""
    tk_new = t[k] + delta
    if tk_new < 0.0 or tk_new > total:
        return None
    rest = total - t[k]
    if rest <= 0.0:
        return None if tk_new != t[k] else t
    candidate = t * ((total - tk_new) / rest)
    candidate[k] = tk_new
    return candidate


def sd_durations(
    system: ControlSystem, word: str, total: float, config: SdConfig | None = None
) -> OptimizationResult:
    """Strict-improvement random search over durations at fixed total duration."""
    validate_word(word)
    if not total > 0:
        raise InvalidInputError(f"total duration must be positive, got {total}")
    config = config or SdConfig()
    compiled = CompiledSystem(system)
    n_seg = len(word)

    rng = np.random.default_rng(config.seed)
    t = random_durations(n_seg, total, rng)
    coords = rng.integers(0, n_seg, size=config.iterations)
    gauss = rng.standard_normal(config.iterations)

    best_f = compiled.fidelity_word(word, t)
    trace = [(0, bures_distance(best_f))]
    step = config.initial_step if config.initial_step is not None else total / 20.0
    stale = 0
    last_accept = 0
    used = config.iterations
    for i in range(config.iterations):
        candidate = _propose(t, int(coords[i]), float(gauss[i]) * step, total)
        accepted = False
        if candidate is not None:
            f = compiled.fidelity_word(word, candidate)
            if f > best_f:
                t, best_f = candidate, f
                trace.append((i + 1, bures_distance(best_f)))
                stale = 0
                last_accept = i + 1
                accepted = True
        if not accepted:
            stale += 1
            if stale >= config.patience:
                step *= config.step_decay
                stale = 0
                if step < config.min_step:
                    used = i + 1
                    break
    if trace[-1][0] != used:
        trace.append((used, bures_distance(best_f)))
    converged = used < config.iterations or last_accept <= 0.8 * used
    return OptimizationResult(
        best_control=BangOffControl(word=word, durations=t, bound=system.bound),
        best_fidelity=best_f,
        trace=tuple(trace),
        iterations_used=used,
        seed=config.seed,
        converged=converged,
    )


def sd_durations_batch(
    objective_batch,
    n_coords: int,
    total: float,
    n_starts: int,
    iterations: int,
    seed: int,
    initial_step: float | None = None,
    step_decay: float = 0.5,
    patience: int = 200,
    min_step: float = 1e-10,
    initial_points: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized multi-start simplex search maximizing `objective_batch`.

    `objective_batch` maps a (batch, n_coords) matrix of simplex points
    (non-negative, each row summing to `total`) to a fidelity per row.
    Returns (points (n_starts, n_coords), fidelities (n_starts,)).  All
    starts share the iteration loop but own independent coordinates,
    steps and staleness counters; used by the speed-limit search where
    only the end points matter, not per-start traces.
    """
    n_seg = n_coords
    rng = np.random.default_rng([seed, n_starts])
    spacings = -np.log(rng.random((n_starts, n_seg)))
    t = total * spacings / spacings.sum(axis=1, keepdims=True)
    if initial_points is not None:
        k = min(initial_points.shape[0], n_starts)
        t[:k] = initial_points[:k]
    coords = rng.integers(0, n_seg, size=(iterations, n_starts))
    gauss = rng.standard_normal((iterations, n_starts))

    best_f = objective_batch(t)
    step = np.full(n_starts, initial_step if initial_step is not None else total / 20.0)
    stale = np.zeros(n_starts, dtype=int)
    active = np.ones(n_starts, dtype=bool)
    rows = np.arange(n_starts)
    for i in range(iterations):
        if not active.any():
            break
        k = coords[i]
        tk = t[rows, k]
        tk_new = tk + gauss[i] * step
        rest = total - tk
        feasible = active & (tk_new >= 0.0) & (tk_new <= total) & (rest > 0.0)
        factor = np.where(rest > 0.0, (total - tk_new) / np.where(rest > 0.0, rest, 1.0), 0.0)
        candidate = t * factor[:, None]
        candidate[rows, k] = tk_new
        f = objective_batch(candidate)
        improved = feasible & (f > best_f)
        t[improved] = candidate[improved]
        best_f[improved] = f[improved]
        stale[improved] = 0
        rejected = active & ~improved
        stale[rejected] += 1
        shrink = stale >= patience
        step[shrink] *= step_decay
        stale[shrink] = 0
        active &= step >= min_step
    return t, best_f


# ---------------------------------------------------------------------------
# quasi-Newton refinement
# ---------------------------------------------------------------------------

FD_STEP = 1e-7


def fd_gradient(fun, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def _bfgs_maximize(objective, x0: np.ndarray, max_rounds: int = 3):
    """Maximize `objective` with BFGS on the projected parameters.

    `objective` must accept possibly-infeasible points and evaluate at
    their projection; after each BFGS round the iterate is re-projected
    and the search restarted from the boundary if projection moved it.
    """
    neg = lambda x: -objective.value(x)
    jac = lambda x: -objective.gradient(x)
    x = np.asarray(x0, dtype=float)
    result = None
    for _ in range(max_rounds):
        result = sciopt.minimize(
            neg, x, jac=jac, method="BFGS", options={"gtol": 1e-12, "maxiter": 500}
        )
        projected = objective.project(result.x)
        if np.max(np.abs(projected - result.x)) <= 1e-12:
            x = result.x
            break
        x = projected
    best_x = objective.project(result.x if result is not None else x)
    return best_x, objective.value(best_x)


class _DurationsObjective:
    """Fidelity over free durations, with simplex projection.

    Only segments listed in `active` are optimized; the rest are pinned
    at zero (used to test whether a short segment is really needed).  In
    fixed-total mode the last active segment absorbs the remainder of
    the total, so the parameter vector has one entry less than `active`.
    """

    def __init__(
        self,
        compiled: CompiledSystem,
        word: str,
        total: float,
        fixed_total: bool,
        active: tuple[int, ...] | None = None,
    ):
        self.compiled = compiled
        self.word = word
        self.total = float(total)
        self.fixed_total = fixed_total
        self.active = tuple(range(len(word))) if active is None else tuple(active)

    @property
    def n_params(self) -> int:
        return len(self.active) - 1 if self.fixed_total else len(self.active)

    def x0_from(self, durations: np.ndarray) -> np.ndarray:
        durations = np.asarray(durations, dtype=float)
        picked = durations[list(self.active)]
        return picked[:-1] if self.fixed_total else picked

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        s = x.sum()
        if s > self.total and s > 0.0:
            x = x * (self.total / s)
        return x

    def durations(self, x: np.ndarray) -> np.ndarray:
        x = self.project(x)
        full = np.zeros(len(self.word))
        if self.fixed_total:
            full[list(self.active[:-1])] = x
            full[self.active[-1]] = self.total - x.sum()
        else:
            full[list(self.active)] = x
        return full

    def value(self, x: np.ndarray) -> float:
        return self.compiled.fidelity_word(self.word, self.durations(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return fd_gradient(self.value, np.asarray(x, dtype=float))


def quasi_newton(
    system: ControlSystem,
    word: str,
    total: float,
    start_durations,
    seed: int = 0,
) -> OptimizationResult:
    """BFGS refinement of a duration vector at fixed total duration.

    Gradients are central finite differences of the exact fidelity;
    negative or over-budget iterates are projected back onto the simplex
    and the search restarted from there.
    """
    validate_word(word)
    start = np.asarray(start_durations, dtype=float)
    if start.shape != (len(word),):
        raise InvalidInputError(
            f"need {len(word)} start durations for word {word!r}, got {start.shape}"
        )
    compiled = CompiledSystem(system)
    objective = _DurationsObjective(compiled, word, total, fixed_total=True)
    f_start = compiled.fidelity_word(word, start)
    if len(word) == 1:
        best_t, best_f = start, f_start
    else:
        x, f_opt = _bfgs_maximize(objective, objective.x0_from(start))
        if f_opt > f_start:
            best_t, best_f = objective.durations(x), f_opt
        else:
            best_t, best_f = start, f_start
    trace = ((0, bures_distance(f_start)), (1, bures_distance(best_f)))
    return OptimizationResult(
        best_control=BangOffControl(word=word, durations=best_t, bound=system.bound),
        best_fidelity=best_f,
        trace=trace,
        iterations_used=1,
        seed=seed,
        converged=True,
    )


def polish_durations(
    compiled: CompiledSystem,
    word: str,
    durations: np.ndarray,
    total: float,
    fixed_total: bool = True,
) -> tuple[np.ndarray, float]:
    """Internal refinement used by the speed-limit search.

    After the BFGS pass, segments that ended up short are tentatively
    snapped to zero and the rest re-polished; the snap is kept only if
    the fidelity does not drop.  Perfect-fidelity valleys are extremely
    flat along collapsing segments, so BFGS alone stalls at small but
    nonzero durations there.  Returns the polished full duration vector
    and its fidelity; in budget mode the vector may sum to less than
    `total`.
    """
    durations = np.asarray(durations, dtype=float)

    def refine(start: np.ndarray, active: tuple[int, ...]) -> tuple[np.ndarray, float]:
        objective = _DurationsObjective(compiled, word, total, fixed_total, active)
        if objective.n_params < 1:
            full = objective.durations(np.empty(0))
            return full, compiled.fidelity_word(word, full)
        x, f = _bfgs_maximize(objective, objective.x0_from(start))
        return objective.durations(x), f

    active = tuple(range(len(word)))
    best_t, best_f = refine(durations, active)
    f_start = compiled.fidelity_word(word, durations)
    if f_start > best_f:
        best_t, best_f = durations, f_start

    # Try dropping short segments: pin them at zero, re-polish the rest,
    # keep the reduced control unless fidelity degrades.
    snap_limit = 0.05 * max(total, 1e-12)
    for idx in np.argsort(best_t):
        idx = int(idx)
        if idx not in active or len(active) < 2 or best_t[idx] > snap_limit:
            continue
        trial_active = tuple(i for i in active if i != idx)
        snapped_t, snapped_f = refine(best_t, trial_active)
        if snapped_f >= best_f - 1e-14:
            best_t, best_f, active = snapped_t, snapped_f, trial_active
    return best_t, best_f


# ---------------------------------------------------------------------------
# 1-flip stochastic descent over slot values
# ---------------------------------------------------------------------------


class _SlotChain:
    """Cached forward/backward partial products for single-slot flips."""

    def __init__(self, compiled: CompiledSystem, values_idx: np.ndarray, table: np.ndarray, dt: float):
        self.compiled = compiled
        self.table = table
        self.dt = dt
        self.props = np.stack([compiled.propagator(v, dt) for v in table])
        self.idx = values_idx.copy()
        n = values_idx.size
        dim = compiled.dim
        self.forward = np.empty((n + 1, dim), dtype=complex)
        self.backward = np.empty((n + 1, dim), dtype=complex)
        self._rebuild()

    def _rebuild(self):
        n = self.idx.size
        self.forward[0] = self.compiled.psi0
        for j in range(n):
            self.forward[j + 1] = self.props[self.idx[j]] @ self.forward[j]
        self.backward[n] = self.compiled.system.target.conj()
        for j in range(n - 1, -1, -1):
            self.backward[j] = self.backward[j + 1] @ self.props[self.idx[j]]

    def fidelity(self) -> float:
        amp = self.backward[0] @ self.forward[0]
        return min(abs(amp) ** 2, 1.0)

    def flip_fidelity(self, slot: int, value_idx: int) -> float:
        amp = self.backward[slot + 1] @ (self.props[value_idx] @ self.forward[slot])
        return min(abs(amp) ** 2, 1.0)

    def commit(self, slot: int, value_idx: int):
        self.idx[slot] = value_idx
        for j in range(slot, self.idx.size):
            self.forward[j + 1] = self.props[self.idx[j]] @ self.forward[j]
        for j in range(slot, -1, -1):
            self.backward[j] = self.backward[j + 1] @ self.props[self.idx[j]]

    def best_flip(self, current_f: float):
        """Best strictly improving single flip, or None (the certificate sweep)."""
        best = None
        best_f = current_f
        for slot in range(self.idx.size):
            for value_idx in range(3):
                if value_idx == self.idx[slot]:
                    continue
                f = self.flip_fidelity(slot, value_idx)
                if f > best_f:
                    best, best_f = (slot, value_idx), f
        return best, best_f


def one_flip_sd(
    system: ControlSystem, total: float, n_slots: int, config: SdConfig | None = None
) -> OptimizationResult:
    """Strict-improvement single-slot search over {-bound, 0, +bound} values.

    A full sweep over all 2*n_slots flips runs whenever proposals go
    stale and at the end of the budget; the result is flagged converged
    only if a sweep certifies that no improving flip exists.
    """
    if n_slots < 1:
        raise InvalidInputError("need at least one slot")
    if not total > 0:
        raise InvalidInputError(f"total duration must be positive, got {total}")
    config = config or SdConfig()
    compiled = CompiledSystem(system)
    dt = total / n_slots
    table = np.array([-system.bound, 0.0, system.bound])

    rng = np.random.default_rng(config.seed)
    idx0 = rng.integers(0, 3, size=n_slots)
    slots = rng.integers(0, n_slots, size=config.iterations)
    choices = rng.integers(0, 2, size=config.iterations)

    chain = _SlotChain(compiled, idx0, table, dt)
    best_f = chain.fidelity()
    trace = [(0, bures_distance(best_f))]
    stale = 0
    sweep_after = 3 * n_slots
    converged = False
    used = config.iterations
    for i in range(config.iterations):
        slot = int(slots[i])
        current = chain.idx[slot]
        alternates = [v for v in range(3) if v != current]
        value_idx = alternates[int(choices[i])]
        f = chain.flip_fidelity(slot, value_idx)
        if f > best_f:
            chain.commit(slot, value_idx)
            best_f = f
            trace.append((i + 1, bures_distance(best_f)))
            stale = 0
            continue
        stale += 1
        if stale >= sweep_after:
            move, f_sweep = chain.best_flip(best_f)
            if move is None:
                converged = True
                used = i + 1
                break
            chain.commit(*move)
            best_f = f_sweep
            trace.append((i + 1, bures_distance(best_f)))
            stale = 0
    else:
        move, _ = chain.best_flip(best_f)
        converged = move is None
    if trace[-1][0] != used:
        trace.append((used, bures_distance(best_f)))
    control = PiecewiseControl(values=table[chain.idx], dt=dt, bound=system.bound)
    return OptimizationResult(
        best_control=control,
        best_fidelity=best_f,
        trace=tuple(trace),
        iterations_used=used,
        seed=config.seed,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# CRAB baseline
# ---------------------------------------------------------------------------

CRAB_EVALS_PER_RESTART = 2000


def crab_optimize(
    system: ControlSystem,
    total: float,
    n_modes: int,
    restarts: int = 20,
    seed: int = 0,
) -> OptimizationResult:
    """Derivative-free coefficient search for the clamped Fourier baseline.

    Each restart draws fresh randomized frequencies and initial
    coefficients, then runs a Nelder-Mead simplex search with a fixed
    evaluation budget; the best restart wins.
    """
    if n_modes < 1 or restarts < 1:
        raise InvalidInputError("n_modes and restarts must be >= 1")
    if not total > 0:
        raise InvalidInputError(f"total duration must be positive, got {total}")
    compiled = CompiledSystem(system)
    bound = system.bound

    best: tuple[float, CrabControl] | None = None
    trace = []
    evals = 0
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        jitter = rng.uniform(-0.5, 0.5, size=n_modes)
        freqs = (2.0 * np.pi * np.arange(1, n_modes + 1) / total) * (1.0 + jitter)
        x0 = rng.uniform(-bound, bound, size=2 * n_modes) / n_modes

        def neg_fidelity(x):
            control = CrabControl(
                coefficients=x.reshape(n_modes, 2),
                frequencies=freqs,
                duration=total,
                bound=bound,
            )
            return -compiled.fidelity_crab(control)

        res = sciopt.minimize(
            neg_fidelity,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": CRAB_EVALS_PER_RESTART,
                "xatol": 1e-12,
                "fatol": 1e-16,
            },
        )
        evals += res.nfev
        control = CrabControl(
            coefficients=res.x.reshape(n_modes, 2),
            frequencies=freqs,
            duration=total,
            bound=bound,
        )
        f = -float(res.fun)
        if best is None or f > best[0]:
            best = (f, control)
        trace.append((r, bures_distance(best[0])))
    return OptimizationResult(
        best_control=best[1],
        best_fidelity=best[0],
        trace=tuple(trace),
        iterations_used=evals,
        seed=seed,
        converged=True,
    )
