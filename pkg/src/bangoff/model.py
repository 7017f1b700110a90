"""Concrete control systems and their analytic reference solutions.

Two benchmark systems are provided: a driven two-level system
(drift ``-energy * sigma_z``, control ``sigma_x``) and a three-level
ladder in which the control couples the upper pair of levels.  The
closed-form switching times of the amplitude-bounded two-level problem
are exposed as oracles for the numerical search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, OutOfRegimeError
from .linalg import SIGMA_X, SIGMA_Z, as_state, check_hermitian

# Duration of the final bang segment of the pole-to-equator transfer.
# There is no closed formula for it; the value is pinned numerically and
# cross-checked by the optimizer tests.
EQUATOR_FINAL_BANG = 0.2978


@dataclass(frozen=True)
class ControlSystem:
    """A bilinear control problem: H(t) = drift + u(t) * control, |u| <= bound."""

    drift: np.ndarray
    control: np.ndarray
    bound: float
    initial: np.ndarray
    target: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "drift", check_hermitian(self.drift))
        object.__setattr__(self, "control", check_hermitian(self.control))
        if self.drift.shape != self.control.shape:
            raise InvalidInputError("drift and control operators differ in shape")
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise InvalidInputError(f"amplitude bound must be positive, got {self.bound}")
        object.__setattr__(self, "initial", as_state(self.initial))
        object.__setattr__(self, "target", as_state(self.target))
        if self.initial.shape[0] != self.drift.shape[0]:
            raise InvalidInputError("initial state dimension does not match operators")
        if self.target.shape[0] != self.drift.shape[0]:
            raise InvalidInputError("target state dimension does not match operators")

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def hamiltonian(self, u: float) -> np.ndarray:
        return self.drift + u * self.control


def two_level(energy: float, bound: float, target) -> ControlSystem:
    """Two-level system with drift -energy*sigma_z and control sigma_x from |0>."""
    if not (np.isfinite(energy) and energy > 0):
        raise InvalidInputError(f"energy must be positive, got {energy}")
    if not (np.isfinite(bound) and bound > 0):
        raise InvalidInputError(f"bound must be positive, got {bound}")
    return ControlSystem(
        drift=-energy * SIGMA_Z,
        control=SIGMA_X.copy(),
        bound=float(bound),
        initial=np.array([1.0, 0.0]),
        target=target,
        meta={"kind": "two_level", "energy": float(energy), "bound": float(bound)},
    )


def three_level(energy: float, coupling12: float, coupling23: float, bound: float) -> ControlSystem:
    """Three-level ladder |1> -> |3>; the control drives the 2-3 coupling."""
    if not (np.isfinite(bound) and bound > 0):
        raise InvalidInputError(f"bound must be positive, got {bound}")
    for name, v in (("energy", energy), ("coupling12", coupling12), ("coupling23", coupling23)):
        if not np.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v}")
    level_split = np.diag([1.0, 0.0, -1.0]).astype(complex)
    low_pair = np.zeros((3, 3), dtype=complex)
    low_pair[0, 1] = low_pair[1, 0] = 1.0
    high_pair = np.zeros((3, 3), dtype=complex)
    high_pair[1, 2] = high_pair[2, 1] = 1.0
    return ControlSystem(
        drift=-energy * level_split + coupling12 * low_pair,
        control=coupling23 * high_pair,
        bound=float(bound),
        initial=np.array([1.0, 0.0, 0.0]),
        target=np.array([0.0, 0.0, 1.0]),
        meta={
            "kind": "three_level",
            "energy": float(energy),
            "coupling12": float(coupling12),
            "coupling23": float(coupling23),
            "bound": float(bound),
        },
    )


def equator_target(phase: float) -> np.ndarray:
    """Equal-weight superposition target (|0> + e^{i phase} |1>)/sqrt(2)."""
    return np.array([1.0, np.exp(1j * phase)]) / math.sqrt(2.0)


@dataclass(frozen=True)
class BangBangSolution:
    """Closed-form switching times of the pole-to-pole transfer.

    ``t1 + t2`` equals the quantum speed limit ``t_qsl`` and ``t1 <= t2``.
    """

    t1: float
    t2: float
    t_qsl: float
    alpha: float


@dataclass(frozen=True)
class BangOffSolution:
    """Closed-form segment times of the pole-to-equator transfer.

    ``t2_one_switch`` is the longer off duration used by the single-switch
    control that still reaches the target (at a total above the speed limit).
    """

    beta: float
    t1: float
    t2: float
    t2_one_switch: float

    @property
    def t_qsl(self) -> float:
        return self.t1 + self.t2 + EQUATOR_FINAL_BANG


def bang_bang_solution(energy: float, bound: float) -> BangBangSolution:
    """Optimal two-bang switching times for |0> -> |1> when arctan(bound/energy) > pi/4."""
    if not (np.isfinite(energy) and energy > 0 and np.isfinite(bound) and bound > 0):
        raise InvalidInputError("energy and bound must be finite and positive")
    alpha = math.atan2(bound, energy)
    if alpha <= math.pi / 4:
        raise OutOfRegimeError(
            f"arctan(bound/energy) = {alpha:.4f} <= pi/4: two-bang formulas do not apply"
        )
    rabi = math.hypot(energy, bound)
    cot2 = (energy / bound) ** 2
    t1 = (math.pi - math.acos(cot2)) / (2 * rabi)
    t2 = (math.pi + math.acos(cot2)) / (2 * rabi)
    return BangBangSolution(t1=t1, t2=t2, t_qsl=math.pi / rabi, alpha=alpha)


def bang_off_solution(energy: float, bound: float) -> BangOffSolution:
    """Bang-off segment times for the |0> -> equator(9*pi/10) transfer."""
    if not (np.isfinite(energy) and energy > 0 and np.isfinite(bound) and bound > 0):
        raise InvalidInputError("energy and bound must be finite and positive")
    if bound <= energy:
        raise OutOfRegimeError(f"bound {bound} must exceed energy {energy}")
    beta = math.acos(energy / bound)
    t1 = bang_bang_solution(energy, bound).t1
    return BangOffSolution(
        beta=beta,
        t1=t1,
        t2=(beta - math.pi / 10) / (2 * energy),
        t2_one_switch=(beta + math.pi / 10) / (2 * energy),
    )


def system_to_dict(system: ControlSystem) -> dict:
    """JSON-ready description of a system built by two_level/three_level."""
    meta = dict(system.meta)
    kind = meta.get("kind")
    if kind == "two_level":
        return {
            "kind": "two_level",
            "E": meta["energy"],
            "M": meta["bound"],
            "target": [[float(a.real), float(a.imag)] for a in system.target],
        }
    if kind == "three_level":
        return {
            "kind": "three_level",
            "E": meta["energy"],
            "M": meta["bound"],
            "mu1": meta["coupling12"],
            "mu2": meta["coupling23"],
        }
    raise InvalidInputError(f"cannot serialize system of kind {kind!r}")


def system_from_dict(doc: dict) -> ControlSystem:
    """Build a ControlSystem from a parsed system definition document."""
    if not isinstance(doc, dict):
        raise InvalidInputError("system definition must be a mapping")
    kind = doc.get("kind")
    if kind == "two_level":
        for key in ("E", "M", "target"):
            if key not in doc:
                raise InvalidInputError(f"two_level definition missing field {key!r}")
        target = doc["target"]
        try:
            amps = np.array([complex(re, im) for re, im in target])
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(
                "target must be a list of [real, imag] pairs"
            ) from exc
        return two_level(float(doc["E"]), float(doc["M"]), amps)
    if kind == "three_level":
        for key in ("E", "M", "mu1", "mu2"):
            if key not in doc:
                raise InvalidInputError(f"three_level definition missing field {key!r}")
        return three_level(
            float(doc["E"]), float(doc["mu1"]), float(doc["mu2"]), float(doc["M"])
        )
    raise InvalidInputError(f"unknown system kind {kind!r}")


def load_system(path) -> ControlSystem:
    """Load a system definition from a JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read system file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"system file {path} is not valid JSON: {exc}") from exc
    return system_from_dict(doc)
