"""Deterministic synthetic field solver used in place of a full-wave simulation.

Pipeline for one sample: tile the meta-atom 3x3, mark boundary cells, give each
boundary cell an amplitude that grows as the gap to the nearest *other*
material component shrinks, attach the local incident phase, and radiate the
complex sources through an outgoing, decaying kernel by zero-padded FFT
convolution. The output is the energy density ``|E|**2`` on the supercell grid.

The kernel decays as an inverse square so that narrow-gap hotspots stand out
above the summed background of the whole boundary.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

CELLS = 3

W1 = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.float64)
W2 = np.array([[-1, 8, -1], [-1, -1, -1], [-1, -1, -1]], dtype=np.float64)
W3 = np.array([[-1, -1, -1], [-1, -1, -1], [-1, -1, -8]], dtype=np.float64)
W3_FOCUS = np.array([[-1, -1, -1], [-1, -1, -1], [-1, -1, 8]], dtype=np.float64)
TASK_WEIGHTS = {"W1": W1, "W2": W2, "W3": W3, "W3_focus": W3_FOCUS}


class DegenerateResponseError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConstants:
    version: str = "synth-oracle-1"
    a0: float = 1.0
    eps0: float = 0.03
    # k0 = wavenumber_factor * (G/N) / 3 radians per tile length
    wavenumber_factor: float = 2 * np.pi
    # kernel magnitude 1 / (1 + r / decay_length) ** decay_exponent, r in tile lengths
    decay_length: float = 0.03
    decay_exponent: float = 2.0
    # gap distances are capped at this many tile lengths when no other component exists
    gap_cap: float = 1.0
    distance_metric: str = "chessboard"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OracleConstants":
        return cls(**d)


DEFAULT_CONSTANTS = OracleConstants()


def tile(meta_atom: np.ndarray, cells: int = CELLS) -> np.ndarray:
    return np.tile(np.asarray(meta_atom), (cells, cells))


def boundary_map(chi: np.ndarray) -> np.ndarray:
    """Cells whose value differs from at least one 4-neighbour (edge-replicated)."""
    c = np.pad(np.asarray(chi, dtype=bool), 1, mode="edge")
    core = c[1:-1, 1:-1]
    return ((core != c[:-2, 1:-1]) | (core != c[2:, 1:-1]) |
            (core != c[1:-1, :-2]) | (core != c[1:-1, 2:]))


def gap_distance(chi: np.ndarray, n: int, constants: OracleConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Per-cell distance (pixels) to the nearest material cell of a different 8-connected component.

    Material cells get the distance from their own component; void cells get the
    minimum over their 4-neighbouring material cells. Cells with no neighbouring
    material, or components with no partner, carry the cap ``gap_cap * n``.
    """
    mat = np.asarray(chi, dtype=bool)
    cap = constants.gap_cap * n
    labels, count = ndimage.label(mat, structure=np.ones((3, 3), dtype=int))
    dist = np.full(mat.shape, cap)
    if count >= 2:
        for lab in range(1, count + 1):
            others = mat & (labels != lab)
            d = ndimage.distance_transform_cdt(~others, metric=constants.distance_metric).astype(np.float64)
            own = labels == lab
            dist[own] = np.minimum(d[own], cap)
    padded = np.pad(np.where(mat, dist, np.inf), 1, constant_values=np.inf)
    neigh = np.minimum.reduce([padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]])
    void_d = np.minimum(neigh, cap)
    return np.where(mat, dist, void_d)


def source_amplitude(chi: np.ndarray, n: int, constants: OracleConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Real source amplitude on boundary cells of the tiled array, zero elsewhere."""
    chi = np.asarray(chi)
    b = boundary_map(chi)
    if not b.any():
        return np.zeros(chi.shape)
    d = gap_distance(chi, n, constants)
    amp = constants.a0 / (constants.eps0 + d / n) ** 2
    return np.where(b, amp, 0.0)


@lru_cache(maxsize=16)
def _kernel_spectrum(g: int, n: int, constants: OracleConstants) -> tuple[np.ndarray, int]:
    size = sfft.next_fast_len(2 * g - 1)
    off = np.arange(size)
    off = np.where(off < size - g + 1, off, off - size)  # signed offsets -(g-1)..(g-1)
    r = np.hypot(off[:, None], off[None, :]) / n  # tile lengths
    k0 = constants.wavenumber_factor * (g / n) / CELLS
    ker = np.exp(1j * k0 * r) / (1.0 + r / constants.decay_length) ** constants.decay_exponent
    valid = np.abs(off) <= g - 1
    ker = np.where(valid[:, None] & valid[None, :], ker, 0.0)
    spec = sfft.fft2(ker)
    spec.flags.writeable = False
    return spec, size


def radiate(sources: np.ndarray, n: int, constants: OracleConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Linear convolution of complex sources with the radiating kernel; returns complex E."""
    g = sources.shape[0]
    spec, size = _kernel_spectrum(g, n, constants)
    e = sfft.ifft2(sfft.fft2(sources, s=(size, size)) * spec)
    return e[:g, :g]


def simulate_from_amplitude(amplitude: np.ndarray, phase: np.ndarray, n: int,
                            constants: OracleConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    src = amplitude * np.exp(1j * phase)
    src = np.where(amplitude > 0, src, 0.0)
    e = radiate(src, n, constants)
    return e.real ** 2 + e.imag ** 2


def simulate(meta_atom: np.ndarray, phase: np.ndarray,
             constants: OracleConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Energy density ``|E|**2`` on the ``3N x 3N`` supercell grid."""
    chi = np.asarray(meta_atom)
    n = chi.shape[0]
    g = CELLS * n
    phase = np.asarray(phase, dtype=np.float64)
    if chi.shape != (n, n) or phase.shape != (g, g):
        raise ValueError(f"grid mismatch: meta-atom {chi.shape} needs phase ({g}, {g}), got {phase.shape}")
    if not np.all(np.isfinite(phase)):
        raise ValueError("phase field is not finite")
    amp = source_amplitude(tile(chi), n, constants)
    return simulate_from_amplitude(amp, phase, n, constants)


def patch_sums(field: np.ndarray, cells: int = CELLS) -> np.ndarray:
    g = field.shape[-1]
    if g % cells:
        raise ValueError(f"grid {g} not divisible into {cells}x{cells} patches")
    p = g // cells
    return field.reshape(*field.shape[:-2], cells, p, cells, p).sum(axis=(-3, -1))


def response_matrix(field: np.ndarray) -> np.ndarray:
    """Patch-integrated energy on the 3x3 array, normalized to unit sum."""
    f = np.asarray(field, dtype=np.float64)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise ValueError("field must be finite and non-negative")
    raw = patch_sums(f)
    total = raw.sum()
    if total <= 0:
        raise DegenerateResponseError("field carries no energy")
    return raw / total


def fom(response: np.ndarray, task_weights: np.ndarray) -> float:
    """Scalar figure of merit: sum of the elementwise product with the task matrix."""
    r, w = np.asarray(response), np.asarray(task_weights)
    if r.shape != w.shape:
        raise ValueError(f"shape mismatch: response {r.shape} vs weights {w.shape}")
    return float(np.sum(w * r))
