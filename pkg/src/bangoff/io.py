"""Deterministic file emission: CSV data files and JSON run summaries.

Every emitted file records the hash of the fully resolved configuration
that produced it, so reruns can be diffed byte for byte.  Floats are
written with `repr`, which round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .controls import PiecewiseControl, format_word
from .errors import InvalidInputError


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def write_csv(path, header, rows, cfg_hash: str, extra_meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config={cfg_hash}"]
    for key, value in (extra_meta or {}).items():
        lines.append(f"# {key}={fmt(value)}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]], dict[str, str]]:
    """Read a CSV written by `write_csv`; returns (header, rows, metadata)."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        if header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    if header is None:
        raise InvalidInputError(f"{path} contains no CSV header")
    return header, rows, meta


def write_summary(path, command: str, config: dict, results: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "results": results,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"cannot serialize {type(value)!r}")


def control_rows(control, n_slots: int = 200):
    """(t, u) rows at slot midpoints for export and step plots."""
    from .controls import to_piecewise

    pw = control if isinstance(control, PiecewiseControl) else to_piecewise(control, n_slots)
    mids = (np.arange(pw.n_slots) + 0.5) * pw.dt
    return [(t, u) for t, u in zip(mids, pw.values)], pw


def write_control_csv(path, control, cfg_hash: str, n_slots: int = 200) -> Path:
    rows, pw = control_rows(control, n_slots)
    meta = {"dt": pw.dt, "bound": pw.bound}
    return write_csv(path, ["t", "u"], rows, cfg_hash, extra_meta=meta)


def read_piecewise_csv(path) -> PiecewiseControl:
    header, rows, meta = read_csv(path)
    if header != ["t", "u"]:
        raise InvalidInputError(f"{path} is not a control file (expected t,u columns)")
    if "dt" not in meta or "bound" not in meta:
        raise InvalidInputError(f"{path} is missing dt/bound metadata")
    values = np.array([float(u) for _, u in rows])
    if values.size == 0:
        raise InvalidInputError(f"{path} holds no control samples")
    return PiecewiseControl(values=values, dt=float(meta["dt"]), bound=float(meta["bound"]))


def write_trace_csv(path, results, cfg_hash: str) -> Path:
    """Traces of several optimization runs: point_id, iteration, d_B."""
    rows = []
    for point_id, result in enumerate(results):
        for iteration, db in result.trace:
            rows.append((point_id, iteration, db))
    return write_csv(path, ["point_id", "iteration", "d_B"], rows, cfg_hash)


def write_ensemble_csv(path, controls, cfg_hash: str) -> Path:
    """Piecewise ensemble as point_id, slot, u rows with grid metadata."""
    controls = list(controls)
    first = controls[0]
    rows = [
        (pid, slot, u)
        for pid, control in enumerate(controls)
        for slot, u in enumerate(control.values)
    ]
    meta = {"dt": first.dt, "bound": first.bound}
    return write_csv(path, ["point_id", "slot", "u"], rows, cfg_hash, extra_meta=meta)


def read_ensemble_csv(path) -> list[PiecewiseControl]:
    header, rows, meta = read_csv(path)
    if header != ["point_id", "slot", "u"]:
        raise InvalidInputError(f"{path} is not an ensemble file")
    if "dt" not in meta or "bound" not in meta:
        raise InvalidInputError(f"{path} is missing dt/bound metadata")
    dt = float(meta["dt"])
    bound = float(meta["bound"])
    by_point: dict[int, list[tuple[int, float]]] = {}
    for pid, slot, u in rows:
        by_point.setdefault(int(pid), []).append((int(slot), float(u)))
    controls = []
    for pid in sorted(by_point):
        slots = sorted(by_point[pid])
        controls.append(
            PiecewiseControl(values=np.array([u for _, u in slots]), dt=dt, bound=bound)
        )
    return controls


def result_payload(result) -> dict:
    """JSON-ready description of an OptimizationResult."""
    from .controls import BangOffControl, CrabControl

    control = result.best_control
    payload = {
        "best_fidelity": result.best_fidelity,
        "best_bures": result.best_bures,
        "iterations_used": result.iterations_used,
        "seed": result.seed,
        "converged": result.converged,
    }
    if isinstance(control, BangOffControl):
        payload["control"] = {
            "kind": "bang_off",
            "type": format_word(control.word),
            "durations": [float(x) for x in control.durations],
            "bound": control.bound,
        }
    elif isinstance(control, PiecewiseControl):
        payload["control"] = {
            "kind": "piecewise",
            "values": [float(x) for x in control.values],
            "dt": control.dt,
            "bound": control.bound,
        }
    elif isinstance(control, CrabControl):
        payload["control"] = {
            "kind": "fourier",
            "coefficients": [[float(a), float(b)] for a, b in control.coefficients],
            "frequencies": [float(w) for w in control.frequencies],
            "duration": control.duration,
            "bound": control.bound,
        }
    return payload
