"""Control-field parameterizations and type-word utilities.

Three families of controls are supported:

* bang-off controls given by a type word over ``P`` (+bound), ``N``
  (-bound) and ``Z`` (off) plus one free duration per segment,
* piecewise-constant controls on a uniform grid of time slots,
* clamped randomized-Fourier pulses used as the comparison baseline.

Type words are plain strings.  ``Z`` is printed as ``0`` in serialized
form ("PZN" <-> "P0N").  Word order is lexicographic with P < N < Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .linalg import as_state, eigh_hermitian

SYMBOLS = "PNZ"
_ORDER = {"P": 0, "N": 1, "Z": 2}
_NEGATE = {"P": "N", "N": "P", "Z": "Z"}


def validate_word(word: str) -> str:
    if not word:
        raise InvalidInputError("type word must be non-empty")
    for ch in word:
        if ch not in _ORDER:
            raise InvalidInputError(f"invalid symbol {ch!r} in type word {word!r}")
    for a, b in zip(word, word[1:]):
        if a == b:
            raise InvalidInputError(f"adjacent symbols equal in type word {word!r}")
    return word


def word_key(word: str) -> tuple:
    """Sort key realizing the P < N < Z lexicographic order."""
    return tuple(_ORDER[ch] for ch in word)


def negate_word(word: str) -> str:
    return "".join(_NEGATE[ch] for ch in word)


def format_word(word: str) -> str:
    """Serialized form of a word, with the off symbol printed as 0."""
    return word.replace("Z", "0")


def parse_word(text: str) -> str:
    word = text.strip().upper().replace("0", "Z")
    return validate_word(word)


@dataclass(frozen=True)
class Pruning:
    """Optional reductions of the type enumeration.

    ``drop_leading_off``/``drop_trailing_off`` are sound when the initial/
    target state is an eigenstate of the drift (an off segment there only
    contributes a global phase).  ``mirror_reduce`` keeps one word per
    sign-flip pair and is sound when fidelity is invariant under u -> -u.
    """

    drop_leading_off: bool = False
    drop_trailing_off: bool = False
    mirror_reduce: bool = False

    @classmethod
    def none(cls) -> "Pruning":
        return cls()

    @classmethod
    def for_system(cls, system) -> "Pruning":
        return cls(
            drop_leading_off=_is_eigenstate(system.drift, system.initial),
            drop_trailing_off=_is_eigenstate(system.drift, system.target),
            mirror_reduce=has_mirror_symmetry(system),
        )


def _is_eigenstate(H, psi, tol: float = 1e-10) -> bool:
    psi = as_state(psi)
    image = H @ psi
    expectation = np.vdot(psi, image)
    return bool(np.linalg.norm(image - expectation * psi) <= tol)


def has_mirror_symmetry(system, powers: int = 6, n_samples: int = 20, tol: float = 1e-10) -> bool:
    """Check <target| H(u)^n |initial> = -<target| H(-u)^n |initial> numerically."""
    rng = np.random.default_rng(7)
    for u in rng.uniform(-system.bound, system.bound, size=n_samples):
        Hp = system.hamiltonian(u)
        Hm = system.hamiltonian(-u)
        Ap = np.eye(system.dim, dtype=complex)
        Am = np.eye(system.dim, dtype=complex)
        for _ in range(powers):
            Ap = Ap @ Hp
            Am = Am @ Hm
            lhs = np.vdot(system.target, Ap @ system.initial)
            rhs = np.vdot(system.target, Am @ system.initial)
            if abs(lhs + rhs) > tol * max(1.0, abs(lhs)):
                return False
    return True


def enumerate_types(n_switches: int, pruning: Pruning | None = None) -> list[str]:
    """All type words with the given switch count, in P < N < Z order.

    Without pruning the list has exactly ``3 * 2**n_switches`` entries of
    length ``n_switches + 1`` with distinct adjacent symbols.
    """
    if n_switches < 0:
        raise InvalidInputError(f"switch count must be >= 0, got {n_switches}")
    pruning = pruning or Pruning.none()
    words = [""]
    for _ in range(n_switches + 1):
        words = [w + ch for w in words for ch in SYMBOLS if not w or w[-1] != ch]
    if pruning.drop_leading_off:
        words = [w for w in words if w[0] != "Z"]
    if pruning.drop_trailing_off:
        words = [w for w in words if w[-1] != "Z"]
    if pruning.mirror_reduce:
        words = [w for w in words if word_key(w) <= word_key(negate_word(w))]
    return sorted(words, key=word_key)


@dataclass(frozen=True)
class BangOffControl:
    """First-class bang-off control: type word plus per-segment durations."""

    word: str
    durations: np.ndarray
    bound: float

    def __post_init__(self):
        validate_word(self.word)
        durations = np.asarray(self.durations, dtype=float)
        if durations.shape != (len(self.word),):
            raise InvalidInputError(
                f"need {len(self.word)} durations for word {self.word!r}, "
                f"got shape {durations.shape}"
            )
        if not np.all(np.isfinite(durations)) or np.any(durations < -1e-12):
            raise InvalidInputError(f"durations must be finite and >= 0: {durations}")
        object.__setattr__(self, "durations", np.clip(durations, 0.0, None))
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise InvalidInputError(f"bound must be positive, got {self.bound}")

    @property
    def total(self) -> float:
        return float(self.durations.sum())

    def segment_values(self) -> np.ndarray:
        table = {"P": self.bound, "N": -self.bound, "Z": 0.0}
        return np.array([table[ch] for ch in self.word])


@dataclass(frozen=True)
class PiecewiseControl:
    """Second-class control: one value per uniform time slot."""

    values: np.ndarray
    dt: float
    bound: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidInputError("piecewise control needs a 1-d non-empty value array")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidInputError(f"slot width must be positive, got {self.dt}")
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise InvalidInputError(f"bound must be positive, got {self.bound}")
        if np.max(np.abs(values)) > self.bound + 1e-12:
            raise InvalidInputError("piecewise values exceed the amplitude bound")
        object.__setattr__(self, "values", values)

    @property
    def n_slots(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return float(self.n_slots * self.dt)


@dataclass(frozen=True)
class CrabControl:
    """Clamped truncated-Fourier pulse with randomized frequencies.

    ``coefficients`` has shape (n_modes, 2) holding the (sin, cos) pair per
    mode.  Sampling clamps the raw waveform to [-bound, bound].
    """

    coefficients: np.ndarray
    frequencies: np.ndarray
    duration: float
    bound: float

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=float)
        freq = np.asarray(self.frequencies, dtype=float)
        if coeff.ndim != 2 or coeff.shape[1] != 2 or coeff.shape[0] == 0:
            raise InvalidInputError("coefficients must have shape (n_modes, 2)")
        if freq.shape != (coeff.shape[0],):
            raise InvalidInputError("one frequency per mode is required")
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise InvalidInputError(f"duration must be positive, got {self.duration}")
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise InvalidInputError(f"bound must be positive, got {self.bound}")
        object.__setattr__(self, "coefficients", coeff)
        object.__setattr__(self, "frequencies", freq)

    @property
    def n_modes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def total(self) -> float:
        return float(self.duration)

    def waveform(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        phases = np.outer(times, self.frequencies)
        raw = np.sin(phases) @ self.coefficients[:, 0] + np.cos(phases) @ self.coefficients[:, 1]
        return np.clip(raw, -self.bound, self.bound)


Control = BangOffControl | PiecewiseControl | CrabControl


def sample(control: Control, t: float) -> float:
    """Control value at time t.  A switch instant belongs to the later segment."""
    total = control.total
    if not (0.0 <= t <= total + 1e-12):
        raise InvalidInputError(f"time {t} outside [0, {total}]")
    t = min(t, total)
    if isinstance(control, BangOffControl):
        edges = np.cumsum(control.durations)
        idx = int(np.searchsorted(edges, t, side="right"))
        idx = min(idx, len(control.word) - 1)
        return float(control.segment_values()[idx])
    if isinstance(control, PiecewiseControl):
        idx = min(int(t / control.dt), control.n_slots - 1)
        return float(control.values[idx])
    if isinstance(control, CrabControl):
        return float(control.waveform([t])[0])
    raise InvalidInputError(f"unsupported control type {type(control)!r}")


def negate(control: Control) -> Control:
    """Sign-flipped control of the same kind; an involution."""
    if isinstance(control, BangOffControl):
        return replace(control, word=negate_word(control.word))
    if isinstance(control, PiecewiseControl):
        return replace(control, values=-control.values)
    if isinstance(control, CrabControl):
        return replace(control, coefficients=-control.coefficients)
    raise InvalidInputError(f"unsupported control type {type(control)!r}")


def to_piecewise(control: Control, n_slots: int) -> PiecewiseControl:
    """Midpoint-sampled piecewise form on n_slots uniform slots."""
    if n_slots < 1:
        raise InvalidInputError(f"need at least one slot, got {n_slots}")
    if isinstance(control, PiecewiseControl) and control.n_slots == n_slots:
        return control
    total = control.total
    if total <= 0:
        raise InvalidInputError("cannot discretize a zero-duration control")
    dt = total / n_slots
    mids = (np.arange(n_slots) + 0.5) * dt
    if isinstance(control, CrabControl):
        values = control.waveform(mids)
    else:
        values = np.array([sample(control, t) for t in mids])
    return PiecewiseControl(values=values, dt=dt, bound=control.bound)


def control_distance(u: PiecewiseControl, v: PiecewiseControl) -> float:
    """Mean absolute difference of two piecewise controls on the same grid."""
    if u.n_slots != v.n_slots:
        raise InvalidInputError(f"slot counts differ: {u.n_slots} vs {v.n_slots}")
    if abs(u.dt - v.dt) > 1e-12 * max(1.0, u.dt):
        raise InvalidInputError(f"slot widths differ: {u.dt} vs {v.dt}")
    return float(np.mean(np.abs(u.values - v.values)))


def random_durations(n_segments: int, total: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the simplex of non-negative durations summing to total."""
    if total <= 0:
        raise InvalidInputError(f"total duration must be positive, got {total}")
    spacings = -np.log(rng.random(n_segments))
    return total * spacings / spacings.sum()


def random_bangoff(word: str, total: float, bound: float, rng: np.random.Generator) -> BangOffControl:
    """Bang-off control of the given type with simplex-uniform random durations."""
    validate_word(word)
    return BangOffControl(
        word=word, durations=random_durations(len(word), total, rng), bound=bound
    )
