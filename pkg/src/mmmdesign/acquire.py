"""Training-set assembly: diverse shape subset, space-filling phase samples, oracle labelling."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, oracle, shapes, stimulus

log = logging.getLogger(__name__)

DATASET_VERSION = "mmm-dataset-1"


def standardize(features: np.ndarray) -> np.ndarray:
    z = np.asarray(features, dtype=np.float64)
    std = z.std(axis=0)
    return (z - z.mean(axis=0)) / np.where(std > 0, std, 1.0)


def select_diverse(features: np.ndarray, k: int, standardized: bool = False) -> list[int]:
    """Greedy farthest-point order of ``k`` rows, Euclidean in standardized coordinates.

    Starts from the row farthest from the centroid; every later pick maximizes
    the distance to the already selected set. Ties go to the lowest index, so
    the first ``j`` picks do not depend on ``k``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array (items x dims)")
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of items ({n})")
    if not standardized:
        x = standardize(x)
    start = int(np.argmax(np.linalg.norm(x - x.mean(axis=0), axis=1)))
    chosen = [start]
    dist = np.linalg.norm(x - x[start], axis=1)
    for _ in range(k - 1):
        d = np.where(np.isin(np.arange(n), chosen), -1.0, dist)
        nxt = int(np.argmax(d))  # argmax returns the first maximum
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(x - x[nxt], axis=1))
    return chosen


def lhs_unit(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """One Latin hypercube on ``[0, 1)^dims``: a jittered point in each of ``n`` bins per axis."""
    u = np.empty((n, dims))
    for d in range(dims):
        u[:, d] = (rng.permutation(n) + rng.random(n)) / n
    return np.minimum(u, np.nextafter(1.0, 0.0))


def min_pairwise_distance(u: np.ndarray) -> float:
    if len(u) < 2:
        return math.inf
    diff = u[:, None, :] - u[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    return float(d[np.triu_indices(len(u), 1)].min())


def lhs_candidates(n: int, seed: int, restarts: int = 1000, dims: int = stimulus.N_PARAMS) -> list[np.ndarray]:
    if n < 1 or restarts < 1:
        raise ValueError("n and restarts must be >= 1")
    rng = np.random.default_rng(seed)
    return [lhs_unit(n, dims, rng) for _ in range(restarts)]


def lhs_phases(n: int, seed: int = 0, restarts: int = 1000) -> np.ndarray:
    """Maximin Latin hypercube of ``n`` phase-parameter vectors, shape ``(n, 6)``."""
    cands = lhs_candidates(n, seed, restarts)
    best = max(range(len(cands)), key=lambda i: (min_pairwise_distance(cands[i]), -i))
    u = cands[best]
    span = stimulus.UPPER - stimulus.LOWER
    p = stimulus.LOWER + u * span
    # shifts live on [0, 2 pi); guard the open end against rounding
    p[:, stimulus.SHIFT_SLOTS] = np.minimum(p[:, stimulus.SHIFT_SLOTS], np.nextafter(2 * np.pi, 0.0))
    return p


def sample_inputs(chi: np.ndarray, phase_params, n: int) -> np.ndarray:
    """Operator input ``(4, G, G)``: x, y in [0, 1), tiled indicator, incident phase."""
    g = oracle.CELLS * n
    c = ((np.arange(g) + 0.5) / g).astype(np.float32)
    out = np.empty((4, g, g), dtype=np.float32)
    out[0] = c[None, :]
    out[1] = c[:, None]
    out[2] = oracle.tile(chi)
    out[3] = stimulus.phase_field(phase_params, g)
    return out


@dataclass
class Dataset:
    inputs: np.ndarray          # (S, 4, G, G) float32
    energies: np.ndarray        # (S, G, G) raw |E|^2
    scale: float                # median positive energy, used by the log1p transform
    shape_ids: np.ndarray       # (S,) index into the features the set was built from
    phase_ids: np.ndarray       # (S,)
    train_idx: np.ndarray
    test_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def grid(self) -> int:
        return self.inputs.shape[-1]

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        io.write_tensor(d / "inputs.mmt", self.inputs)
        io.write_tensor(d / "targets.mmt", self.energies)
        io.write_json(d / "dataset.json", self.meta)

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        meta = io.read_json(d / "dataset.json")
        inputs = io.read_tensor(d / "inputs.mmt")
        energies = io.read_tensor(d / "targets.mmt")
        if len(inputs) != len(energies) or len(inputs) != len(meta["shape_ids"]):
            raise io.SchemaError("dataset tensors and sidecar disagree on the sample count")
        return cls(inputs, energies, meta["scale"], np.array(meta["shape_ids"]), np.array(meta["phase_ids"]),
                   np.array(meta["train_idx"], dtype=int), np.array(meta["test_idx"], dtype=int), meta)


def _label_shape(args) -> tuple[np.ndarray, np.ndarray] | None:
    feature, phases, n, constants = args
    _, chi = shapes.decode(feature, n)
    if chi.min() == chi.max():
        return None
    amp = oracle.source_amplitude(oracle.tile(chi), n, constants)
    g = oracle.CELLS * n
    inputs = np.empty((len(phases), 4, g, g), dtype=np.float32)
    energies = np.empty((len(phases), g, g))
    for j, p in enumerate(phases):
        inputs[j] = sample_inputs(chi, p, n)
        # label from the float64 phase, not the float32 input channel
        energies[j] = oracle.simulate_from_amplitude(amp, stimulus.phase_field(p, g), n, constants)
    return inputs, energies


def split_shapes(n_shapes: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions of train and test shapes; ``floor(fraction * n)`` go to training."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("split fraction must be in [0, 1]")
    perm = np.random.default_rng(seed).permutation(n_shapes)
    n_train = int(math.floor(fraction * n_shapes))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def build_dataset(features: np.ndarray, phases: np.ndarray, n: int = 32,
                  constants: oracle.OracleConstants = oracle.DEFAULT_CONSTANTS,
                  split: float = 0.8, seed: int = 0, jobs: int = 1,
                  shape_ids=None) -> Dataset:
    """Label every (shape, phase) pair with the oracle; split train/test by shape.

    ``features`` are raw (unstandardized) Fourier features. Shapes that decode
    to an empty or full tile are skipped with a warning. The result does not
    depend on ``jobs``.
    """
    feats = np.asarray(features, dtype=np.float64)
    ph = np.asarray(phases, dtype=np.float64)
    if feats.ndim != 2 or ph.ndim != 2 or ph.shape[1] != stimulus.N_PARAMS:
        raise ValueError("features must be (k_A, d) and phases (k_S, 6)")
    for p in ph:
        stimulus.validate_params(p)
    ids = np.arange(len(feats)) if shape_ids is None else np.asarray(shape_ids, dtype=int)
    tasks = [(f, ph, n, constants) for f in feats]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_label_shape, tasks))
    else:
        results = [_label_shape(t) for t in tasks]
    kept = [i for i, r in enumerate(results) if r is not None]
    for i, r in enumerate(results):
        if r is None:
            log.warning("shape %d decodes to a degenerate tile; skipped", int(ids[i]))
    if not kept:
        raise ValueError("every shape is degenerate; nothing to label")
    inputs = np.concatenate([results[i][0] for i in kept])
    energies = np.concatenate([results[i][1] for i in kept])
    k_s = len(ph)
    shape_pos = np.repeat(np.arange(len(kept)), k_s)
    phase_ids = np.tile(np.arange(k_s), len(kept))
    pos_energy = energies[energies > 0]
    scale = float(np.median(pos_energy)) if pos_energy.size else 1.0
    train_shapes, test_shapes = split_shapes(len(kept), split, seed)
    train_idx = np.flatnonzero(np.isin(shape_pos, train_shapes))
    test_idx = np.flatnonzero(np.isin(shape_pos, test_shapes))
    sample_shape_ids = ids[np.asarray(kept)][shape_pos]
    meta = {
        "kind": "dataset",
        "version": DATASET_VERSION,
        "n": n,
        "grid": oracle.CELLS * n,
        "seed": seed,
        "split": split,
        "oracle_constants": constants.to_dict(),
        "features": feats.tolist(),
        "feature_ids": ids.tolist(),
        "phases": ph.tolist(),
        "skipped": [int(ids[i]) for i, r in enumerate(results) if r is None],
        "scale": scale,
        "target_transform": "log1p",
        "shape_ids": sample_shape_ids.tolist(),
        "phase_ids": phase_ids.tolist(),
        "train_idx": train_idx.tolist(),
        "test_idx": test_idx.tolist(),
        "train_shapes": sorted(set(sample_shape_ids[train_idx].tolist())),
        "test_shapes": sorted(set(sample_shape_ids[test_idx].tolist())),
    }
    return Dataset(inputs, energies, scale, sample_shape_ids, phase_ids, train_idx, test_idx, meta)


def regenerate(meta: dict, jobs: int = 1) -> Dataset:
    """Rebuild a dataset from its sidecar alone."""
    return build_dataset(np.array(meta["features"]), np.array(meta["phases"]), meta["n"],
                         oracle.OracleConstants.from_dict(meta["oracle_constants"]),
                         meta["split"], meta["seed"], jobs, meta["feature_ids"])
