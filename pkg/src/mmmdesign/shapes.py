"""Fourier multiclass blending (FMB) of quadrant-symmetric meta-atoms.

A meta-atom is an ``N x N`` binary image that is mirror symmetric about both
image axes. Its centered DFT (spatial origin at the image center) is then real
and even, so the low-frequency ``(2m+1) x (2m+1)`` block is fully described by
its non-negative quadrant of ``(m+1)**2`` real numbers: the Fourier feature.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import io

log = logging.getLogger(__name__)

CLASSES = ("bowtie", "ellipse", "ibeam", "ring", "square_ring", "cross")

# Generator geometry in units of the tile side N, coordinates centered on the tile.
GENERATOR_VERSION = "fmb-gen-1"
GENERATOR_CONSTANTS = {
    "bowtie": {"half_gap": 0.03, "reach": 0.42, "slope": 0.9},
    "ellipse": {"semi_x": 0.35, "semi_y": 0.25},
    "ibeam": {"flange_half_len": 0.34, "flange_inner": 0.26, "flange_outer": 0.38, "web_half": 0.06},
    "ring": {"r_in": 0.2, "r_out": 0.35},
    "square_ring": {"h_in": 0.2, "h_out": 0.37},
    "cross": {"arm_half": 0.1, "arm_len": 0.4},
}

DEFAULT_M = 5
DEFAULT_THRESHOLD = 0.5


class SymmetryError(ValueError):
    pass


class SynthesisError(RuntimeError):
    pass


@dataclass
class BlendSpec:
    classes: tuple[str, ...]
    weights: tuple[float, ...]

    def validate(self) -> None:
        validate_weights(self.weights)
        if len(self.classes) != len(self.weights):
            raise ValueError("one weight per class required")


def validate_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) < 1:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError(f"weights must lie in [0, 1], got {w.tolist()}")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1 (+-1e-12), got sum {w.sum()!r}")
    return w


def _check_resolution(n: int) -> None:
    if n < 16 or n % 2:
        raise ValueError(f"resolution must be even and >= 16, got {n}")


def _tile_coords(n: int) -> tuple[np.ndarray, np.ndarray]:
    c = (np.arange(n) + 0.5) / n - 0.5
    return np.meshgrid(c, c, indexing="ij")


def class_representative(class_id: str, n: int) -> np.ndarray:
    """Binary, quadrant-symmetric image of one of the six start-up families."""
    _check_resolution(n)
    if class_id not in GENERATOR_CONSTANTS:
        raise ValueError(f"unknown class {class_id!r}; expected one of {CLASSES}")
    p = GENERATOR_CONSTANTS[class_id]
    v, u = _tile_coords(n)  # rows ~ y, cols ~ x
    au, av = np.abs(u), np.abs(v)
    if class_id == "bowtie":
        img = (au >= p["half_gap"]) & (au <= p["reach"]) & (av <= p["slope"] * (au - p["half_gap"]) + 0.5 / n)
    elif class_id == "ellipse":
        img = (u / p["semi_x"]) ** 2 + (v / p["semi_y"]) ** 2 <= 1.0
    elif class_id == "ibeam":
        flange = (au <= p["flange_half_len"]) & (av >= p["flange_inner"]) & (av <= p["flange_outer"])
        web = (au <= p["web_half"]) & (av <= p["flange_outer"])
        img = flange | web
    elif class_id == "ring":
        r = np.hypot(u, v)
        img = (r >= p["r_in"]) & (r <= p["r_out"])
    elif class_id == "square_ring":
        h = np.maximum(au, av)
        img = (h >= p["h_in"]) & (h <= p["h_out"])
    else:  # cross
        img = ((au <= p["arm_half"]) & (av <= p["arm_len"])) | ((av <= p["arm_half"]) & (au <= p["arm_len"]))
    return img.astype(np.uint8)


def check_symmetry(image: np.ndarray, atol: float = 0.0) -> None:
    img = np.asarray(image, dtype=np.float64)
    dev = np.maximum(np.abs(img - img[::-1, :]), np.abs(img - img[:, ::-1]))
    worst = np.unravel_index(np.argmax(dev), dev.shape)
    if dev[worst] > atol:
        raise SymmetryError(f"image is not quadrant symmetric; worst pixel {tuple(int(i) for i in worst)} "
                            f"deviates by {dev[worst]:g}")


@lru_cache(maxsize=32)
def _basis(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine rows for frequencies -m..m about the tile center."""
    k = np.arange(-m, m + 1)[:, None]
    x = np.arange(n)[None, :] - (n - 1) / 2.0
    ang = 2.0 * np.pi * k * x / n
    cos, sin = np.cos(ang), np.sin(ang)
    cos.flags.writeable = sin.flags.writeable = False
    return cos, sin


def centered_block(image: np.ndarray, m: int) -> np.ndarray:
    """Complex centered DFT block for frequencies -m..m on both axes."""
    img = np.asarray(image, dtype=np.float64)
    cos, sin = _basis(img.shape[0], m)
    c = cos - 1j * sin
    return c @ img @ c.T


def store_quadrant(block: np.ndarray) -> np.ndarray:
    m = (block.shape[0] - 1) // 2
    return np.array(block[m:, m:])


def expand_quadrant(quadrant: np.ndarray) -> np.ndarray:
    q = np.asarray(quadrant)
    idx = np.abs(np.arange(-(q.shape[0] - 1), q.shape[0]))
    return q[np.ix_(idx, idx)]


def encode(image: np.ndarray, m: int = DEFAULT_M) -> np.ndarray:
    """Flattened ``(m+1)**2`` real Fourier feature of a quadrant-symmetric image."""
    img = np.asarray(image, dtype=np.float64)
    n = img.shape[0]
    if img.ndim != 2 or img.shape[1] != n:
        raise ValueError(f"expected a square image, got {img.shape}")
    if 2 * m + 1 >= n:
        raise ValueError(f"block 2m+1={2 * m + 1} must be smaller than N={n}")
    scale = max(1.0, float(np.abs(img).max()))
    check_symmetry(img, atol=1e-9 * scale)
    block = centered_block(img, m)
    norm = np.linalg.norm(block)
    if np.abs(block.imag).max() > 1e-9 * max(norm, 1e-300):
        raise SymmetryError("spectral block has a non-negligible imaginary part")
    return store_quadrant(block.real).ravel()


def levelset_raw(feature: np.ndarray, n: int) -> np.ndarray:
    """Inverse transform of the zero-padded block, before normalization."""
    z = np.asarray(feature, dtype=np.float64)
    m = int(round(np.sqrt(z.size))) - 1
    if (m + 1) ** 2 != z.size:
        raise ValueError(f"feature length {z.size} is not a perfect square")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature contains non-finite values")
    cos, _ = _basis(n, m)
    block = expand_quadrant(z.reshape(m + 1, m + 1))
    return cos.T @ block @ cos / float(n * n)


def normalize_levelset(raw: np.ndarray) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo)):
        return np.full(raw.shape, 0.5)
    return (raw - lo) / (hi - lo)


def decode(feature: np.ndarray, n: int, threshold: float = DEFAULT_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
    """Return (normalized level set, binary image) reconstructed from a feature."""
    raw = levelset_raw(feature, n)
    level = normalize_levelset(raw)
    if np.all(level == 0.5) and raw.max() - raw.min() <= 1e-12 * max(1.0, abs(raw.max())):
        return level, np.zeros(level.shape, dtype=np.uint8)
    return level, (level >= threshold).astype(np.uint8)


def reconstruction_error(image: np.ndarray, m: int = DEFAULT_M, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Per-pixel mean absolute error of decode(encode(image)) against ``image``."""
    img = np.asarray(image)
    _, rec = decode(encode(img, m), img.shape[0], threshold)
    return float(np.mean(np.abs(rec.astype(np.float64) - img)))


def blend(features, weights, mean: np.ndarray | None = None, std: np.ndarray | None = None) -> np.ndarray:
    """Convex combination of features, taken in standardized coordinates when stats are given."""
    w = validate_weights(weights)
    z = np.asarray(features, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != len(w):
        raise ValueError(f"need {len(w)} features of equal length, got array of shape {z.shape}")
    if mean is None:
        return w @ z
    std = np.where(np.asarray(std) > 0, std, 1.0)
    return mean + std * (w @ ((z - mean) / std))


@lru_cache(maxsize=16)
def representative_features(n: int, m: int = DEFAULT_M) -> np.ndarray:
    feats = np.stack([encode(class_representative(c, n), m) for c in CLASSES])
    feats.flags.writeable = False
    return feats


def _sample_spec(rng: np.random.Generator, n_b_range: tuple[int, int], classes) -> BlendSpec:
    n_b = int(rng.integers(n_b_range[0], n_b_range[1] + 1))
    chosen = sorted(rng.choice(len(classes), size=n_b, replace=False).tolist())
    cuts = np.sort(rng.random(n_b - 1))
    w = np.diff(np.concatenate([[0.0], cuts, [1.0]]))
    w[-1] = 1.0 - w[:-1].sum()
    return BlendSpec(tuple(classes[i] for i in chosen), tuple(float(x) for x in w))


def synthesize_one(index: int, seed: int, n: int = 64, m: int = DEFAULT_M,
                   n_b_range: tuple[int, int] = (2, 4), max_retries: int = 100) -> tuple[BlendSpec, np.ndarray]:
    rng = np.random.default_rng([seed, index])
    reps = representative_features(n, m)
    for _ in range(max_retries):
        spec = _sample_spec(rng, n_b_range, CLASSES)
        z = blend(reps[[CLASSES.index(c) for c in spec.classes]], spec.weights)
        _, img = decode(z, n)
        frac = img.mean()
        if 0.0 < frac < 1.0:
            return spec, z
    raise SynthesisError(f"index {index}: no non-degenerate blend after {max_retries} draws (last {spec})")


def synthesize_ground_set(count: int, n_b_range: tuple[int, int] = (2, 4), seed: int = 0,
                          n: int = 64, m: int = DEFAULT_M) -> list[tuple[BlendSpec, np.ndarray]]:
    """Blend ``count`` inter-class meta-atoms; item i depends only on (seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = n_b_range
    if not 2 <= lo <= hi <= len(CLASSES):
        raise ValueError(f"n_b range {n_b_range} outside [2, {len(CLASSES)}]")
    return [synthesize_one(i, seed, n, m, n_b_range) for i in range(count)]


@dataclass
class GroundSet:
    features: np.ndarray
    specs: list[BlendSpec]
    seed: int
    n: int
    m: int

    @property
    def mean(self) -> np.ndarray:
        return self.features.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        s = self.features.std(axis=0)
        return np.where(s > 0, s, 1.0)

    def standardized(self) -> np.ndarray:
        return (self.features - self.mean) / self.std

    def sidecar(self) -> dict:
        return {
            "kind": "ground_set",
            "seed": self.seed,
            "n": self.n,
            "m": self.m,
            "count": len(self.features),
            "generator_version": GENERATOR_VERSION,
            "generator_constants": GENERATOR_CONSTANTS,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "specs": [{"classes": list(s.classes), "weights": list(s.weights)} for s in self.specs],
        }

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        io.write_tensor(d / "features.mmt", self.features.astype(np.float64))
        io.write_json(d / "ground_set.json", self.sidecar())

    @classmethod
    def load(cls, directory: str | Path) -> "GroundSet":
        d = Path(directory)
        meta = io.read_json(d / "ground_set.json")
        specs = [BlendSpec(tuple(s["classes"]), tuple(s["weights"])) for s in meta["specs"]]
        return cls(io.read_tensor(d / "features.mmt"), specs, meta["seed"], meta["n"], meta["m"])


def build_ground_set(count: int, seed: int = 0, n: int = 64, m: int = DEFAULT_M,
                     n_b_range: tuple[int, int] = (2, 4)) -> GroundSet:
    items = synthesize_ground_set(count, n_b_range, seed, n, m)
    return GroundSet(np.stack([z for _, z in items]), [s for s, _ in items], seed, n, m)
