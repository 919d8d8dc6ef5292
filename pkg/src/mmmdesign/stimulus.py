"""Two-harmonic incident phase profile over the 3x3 supercell.

Parameter order is ``[amp1, shift_x1, shift_y1, amp2, shift_x2, shift_y2]``.
Coordinates are in unit-cell lengths on ``[0, 3)``; harmonic ``j`` has spatial
frequency ``pi * mtilde / j`` per supercell length.
"""
from __future__ import annotations

import numpy as np

N_HARMONICS = 2
N_PARAMS = 3 * N_HARMONICS
PARAM_NAMES = ("amp1", "shift_x1", "shift_y1", "amp2", "shift_x2", "shift_y2")
CELLS = 3
DEFAULT_MTILDE = 3.0

LOWER = np.zeros(N_PARAMS)
UPPER = np.array([np.pi, 2 * np.pi, 2 * np.pi] * N_HARMONICS)
AMPLITUDE_SLOTS = np.array([0, 3])
SHIFT_SLOTS = np.array([1, 2, 4, 5])


def validate_params(params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} phase parameters, got shape {p.shape}")
    for i, name in enumerate(PARAM_NAMES):
        if not np.isfinite(p[i]):
            raise ValueError(f"{name} is not finite")
        upper_ok = p[i] <= UPPER[i] if i in AMPLITUDE_SLOTS else p[i] < UPPER[i]
        if p[i] < LOWER[i] or not upper_ok:
            raise ValueError(f"{name}={p[i]!r} outside [{LOWER[i]:g}, {UPPER[i]:g}]")
    return p


def project(params) -> np.ndarray:
    """Clamp amplitudes to [0, pi] and wrap shifts into [0, 2 pi)."""
    p = np.array(params, dtype=np.float64)
    p[AMPLITUDE_SLOTS] = np.clip(p[AMPLITUDE_SLOTS], 0.0, np.pi)
    p[SHIFT_SLOTS] = np.mod(p[SHIFT_SLOTS], 2 * np.pi)
    p[SHIFT_SLOTS] = np.where(p[SHIFT_SLOTS] >= 2 * np.pi, 0.0, p[SHIFT_SLOTS])
    return p


def random_params(rng: np.random.Generator) -> np.ndarray:
    return project(LOWER + rng.random(N_PARAMS) * (UPPER - LOWER))


def pixel_centers(g: int) -> np.ndarray:
    return (np.arange(g) + 0.5) * CELLS / g


def _wavenumbers(mtilde: float) -> np.ndarray:
    return np.pi * mtilde / np.arange(1, N_HARMONICS + 1) / CELLS


def phase_at(params, x, y, mtilde: float = DEFAULT_MTILDE, check: bool = True) -> np.ndarray:
    p = validate_params(params) if check else np.asarray(params, dtype=np.float64)
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    for j, kappa in enumerate(_wavenumbers(mtilde)):
        amp, ax, by = p[3 * j:3 * j + 3]
        out = out + amp * np.cos(kappa * x + ax) * np.cos(kappa * y + by)
    return out


def phase_field(params, g: int, mtilde: float = DEFAULT_MTILDE, check: bool = True) -> np.ndarray:
    """Phase lag (radians) at the pixel centers of a ``g x g`` grid, indexed [y, x]."""
    c = pixel_centers(g)
    return phase_at(params, c[None, :], c[:, None], mtilde, check)


def phase_jacobian(params, g: int, mtilde: float = DEFAULT_MTILDE) -> np.ndarray:
    """Analytic partials of :func:`phase_field`, shape ``(6, g, g)``."""
    p = np.asarray(params, dtype=np.float64)
    c = pixel_centers(g)
    jac = np.empty((N_PARAMS, g, g))
    for j, kappa in enumerate(_wavenumbers(mtilde)):
        amp, ax, by = p[3 * j:3 * j + 3]
        cx, sx = np.cos(kappa * c + ax), np.sin(kappa * c + ax)
        cy, sy = np.cos(kappa * c + by), np.sin(kappa * c + by)
        jac[3 * j] = cy[:, None] * cx[None, :]
        jac[3 * j + 1] = -amp * cy[:, None] * sx[None, :]
        jac[3 * j + 2] = -amp * sy[:, None] * cx[None, :]
    return jac
