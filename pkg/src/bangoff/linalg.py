"""Dense complex linear algebra for small quantum systems.

States are one-dimensional complex numpy arrays, operators are square
complex matrices.  Everything here is a pure function; nothing mutates
its inputs.  Propagators of constant Hamiltonians are exact: a closed
form is used for 2x2 generators, a spectral decomposition otherwise,
so piecewise-constant evolution carries no time-discretization error.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

HERMITICITY_TOL = 1e-12
UNITARITY_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_state(values) -> np.ndarray:
    """Return a normalized complex state vector, validating the input."""
    psi = np.asarray(values, dtype=complex).ravel()
    if psi.size < 2:
        raise InvalidInputError(f"state needs at least 2 amplitudes, got {psi.size}")
    if not np.all(np.isfinite(psi.view(float))):
        raise InvalidInputError("state has non-finite amplitudes")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-6:
        raise InvalidInputError(f"state norm {norm!r} is not 1 within 1e-6")
    return psi / norm


def check_hermitian(H) -> np.ndarray:
    """Validate and return H as a complex Hermitian matrix."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError(f"operator must be square, got shape {H.shape}")
    if not np.all(np.isfinite(H.view(float))):
        raise InvalidInputError("operator has non-finite entries")
    dev = np.max(np.abs(H - H.conj().T))
    if dev > HERMITICITY_TOL:
        raise InvalidInputError(f"operator deviates from Hermitian by {dev:.3e}")
    return H


def expm_hermitian(H, dt: float) -> np.ndarray:
    """Exact unitary exp(-i H dt) of a Hermitian generator.

    2x2 generators use the Pauli closed form
    ``exp(-i c0 dt) (cos(|c| dt) I - i sin(|c| dt) c_hat . sigma)``;
    larger ones are exponentiated through their eigendecomposition.
    """
    H = check_hermitian(H)
    dt = float(dt)
    if not np.isfinite(dt):
        raise InvalidInputError("dt must be finite")
    if dt < 0:
        raise InvalidInputError(f"dt must be non-negative, got {dt}")
    n = H.shape[0]
    if n == 2:
        c0 = 0.5 * (H[0, 0].real + H[1, 1].real)
        cx = H[0, 1].real
        cy = -H[0, 1].imag
        cz = 0.5 * (H[0, 0].real - H[1, 1].real)
        r = np.sqrt(cx * cx + cy * cy + cz * cz)
        phase = np.exp(-1j * c0 * dt)
        if r == 0.0:
            return phase * np.eye(2, dtype=complex)
        nx, ny, nz = cx / r, cy / r, cz / r
        c, s = np.cos(r * dt), np.sin(r * dt)
        return phase * np.array(
            [
                [c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
                [-1j * s * (nx + 1j * ny), c + 1j * s * nz],
            ]
        )
    w, V = eigh_hermitian(H)
    return (V * np.exp(-1j * w * dt)) @ V.conj().T


def apply(U, psi) -> np.ndarray:
    """Apply a propagator to a state: U @ psi."""
    U = np.asarray(U, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if U.ndim != 2 or U.shape[1] != psi.shape[0]:
        raise InvalidInputError(
            f"dimension mismatch: operator {U.shape} vs state {psi.shape}"
        )
    return U @ psi


def overlap(a, b) -> complex:
    """Inner product <a|b>, conjugate-linear in the first argument."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def eigh_hermitian(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    H = check_hermitian(H)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc
    return w, V


def unitarity_deviation(U) -> float:
    """Max-entry deviation of U^dagger U from the identity."""
    U = np.asarray(U, dtype=complex)
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))
