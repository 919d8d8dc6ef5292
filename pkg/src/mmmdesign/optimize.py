"""Concurrent architecture-stimulus design through the trained surrogate.

The shape is steered through its standardized Fourier feature ``z``; every
task owns a private set of six phase parameters. Figures of merit are
maximized. For several tasks the shared ``z`` follows the min-norm convex
combination of the per-task gradients, which is a common ascent direction
whenever one exists.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import io, oracle, shapes, stimulus
from .ifno import IfnoModel, backward, forward
from .train import from_target

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.02
DEFAULT_ETA_A = 0.05
DEFAULT_ETA_S = 0.1
DEFAULT_STEPS = 300
BOX_MARGIN = 0.05  # per side, as a fraction of the ground-set range


class OptimizationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class DegenerateSurrogateError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# multi-objective primitives

def min_norm_weights(gradients, tol: float = 1e-10, max_iter: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Simplex weights ``c`` minimizing ``||sum_t c_t g_t||`` and the combined direction."""
    g = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
    if not np.all(np.isfinite(g)):
        raise ValueError("gradients must be finite")
    t = len(g)
    if t == 1:
        return np.ones(1), g[0].copy()
    if t == 2:
        diff = g[0] - g[1]
        den = diff @ diff
        c1 = 0.5 if den <= 0 else float(np.clip((g[1] - g[0]) @ g[1] / den, 0.0, 1.0))
        c = np.array([c1, 1.0 - c1])
        return c, c @ g
    # Frank-Wolfe with away steps: plain FW zig-zags when the optimum lies on a
    # face of the simplex, the away variant converges linearly there.
    gram = g @ g.T
    c = np.full(t, 1.0 / t)
    for _ in range(max_iter):
        mc = gram @ c
        cmc = c @ mc
        j = int(np.argmin(mc))
        if cmc - mc[j] <= tol:
            break
        support = np.flatnonzero(c > 0)
        a = int(support[np.argmax(mc[support])])
        if cmc - mc[j] >= mc[a] - cmc:
            d = -c.copy()
            d[j] += 1.0
            gmax = 1.0
        else:
            d = c.copy()
            d[a] -= 1.0
            gmax = c[a] / (1.0 - c[a]) if c[a] < 1.0 else math.inf
        curv = d @ gram @ d
        slope = mc @ d
        step = gmax if curv <= 0 else min(gmax, max(0.0, -slope / curv))
        c = c + step * d
        c[np.abs(c) < 1e-15] = 0.0
    c = np.maximum(c, 0.0)
    c /= c.sum()
    c = _refine_active_set(gram, c, tol)
    return c, c @ g


def _affine_min(gram: np.ndarray, s: list[int]) -> np.ndarray:
    """Weights on ``s`` summing to one that minimize the quadratic form (least squares on the KKT system)."""
    k = len(s)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = gram[np.ix_(s, s)]
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]


def _refine_active_set(gram: np.ndarray, c: np.ndarray, tol: float, max_rounds: int = 200) -> np.ndarray:
    """Finish a Frank-Wolfe iterate exactly with min-norm-point active-set cycles.

    Frank-Wolfe converges slowly when the minimum sits inside a face, and in
    particular when the origin lies in the hull. Each round solves exactly on
    the current support, walks back toward feasibility by dropping the
    components that turn negative, then adds the vertex violating optimality.
    """
    best = c.copy()
    c = c.copy()
    s = [int(i) for i in np.flatnonzero(c > 0)]
    for _ in range(max_rounds):
        for _ in range(len(c) + 1):
            y = _affine_min(gram, s)
            cur = c[s]
            if np.all(y >= 0):
                c[:] = 0.0
                c[s] = y / y.sum()
                break
            neg = y < 0
            theta = float(np.min(cur[neg] / (cur[neg] - y[neg])))
            c[s] = cur + theta * (y - cur)
            keep = [i for i in s if c[i] > 1e-15]
            c[[i for i in s if i not in keep]] = 0.0
            s = keep
        c = np.maximum(c, 0.0)
        c /= c.sum()
        if c @ gram @ c <= best @ gram @ best:
            best = c.copy()
        mc = gram @ c
        j = int(np.argmin(mc))
        if c @ mc - mc[j] <= tol or j in s:
            break
        s.append(j)
    return best


def pareto_filter(foms, orientation: str = "max") -> list[int]:
    """Indices of non-dominated rows; identical rows never dominate each other."""
    f = np.asarray(foms, dtype=np.float64)
    if f.size == 0:
        return []
    if f.ndim != 2:
        raise ValueError("expected a 2-D array of objective vectors")
    if orientation == "min":
        f = -f
    elif orientation != "max":
        raise ValueError("orientation must be 'max' or 'min'")
    keep = []
    for i in range(len(f)):
        ge = np.all(f >= f[i], axis=1)
        gt = np.any(f > f[i], axis=1)
        if not np.any(ge & gt):
            keep.append(i)
    return keep


def importance_select(pareto_foms, weights) -> int:
    """Position (within ``pareto_foms``) maximizing the weighted sum; ties to the lowest position."""
    f = np.asarray(pareto_foms, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty Pareto set")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("importance weights must be non-negative and not all zero")
    if f.shape[1] != len(w):
        raise ValueError(f"{len(w)} weights for {f.shape[1]} tasks")
    return int(np.argmax(f @ w))


def dominates_median(foms, baseline) -> np.ndarray:
    """Per row, the number of tasks on which it beats the column-wise median of ``baseline``."""
    med = np.median(np.asarray(baseline, dtype=np.float64), axis=0)
    return np.sum(np.asarray(foms) > med, axis=1)


# ---------------------------------------------------------------------------
# generic concurrent ascent

GradFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class Trajectory:
    foms: list[np.ndarray] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    best_z: np.ndarray | None = None
    best_phases: np.ndarray | None = None
    best_fom: np.ndarray | None = None
    final_z: np.ndarray | None = None
    final_phases: np.ndarray | None = None
    stopped_stationary: bool = False

    @property
    def best_so_far(self) -> np.ndarray:
        """Running maximum of the summed FoM."""
        return np.maximum.accumulate([float(f.sum()) for f in self.foms]) if self.foms else np.zeros(0)


def _scaled(step: np.ndarray, eta: float, normalize: bool) -> np.ndarray:
    if not normalize:
        return eta * step
    peak = np.max(np.abs(step)) if step.size else 0.0
    return step * (eta / peak) if peak > 0 else np.zeros_like(step)


def concurrent_ascent(grad_fn: GradFn, z0, phases0, steps: int, eta_a: float, eta_s: float,
                      project_z: Callable = lambda z: z, project_phase: Callable = lambda p: p,
                      normalize: bool = False, tol: float = 1e-8) -> Trajectory:
    """Ascend all tasks at once: private phase steps per task, min-norm step on the shared ``z``.

    ``grad_fn(z, phases)`` returns ``(foms (T,), dz (T, dz), dphase (T, dp))``.
    With ``normalize`` every step is rescaled so its largest component equals
    the step size. The best state is the one with the largest summed FoM.
    """
    z = np.array(z0, dtype=np.float64)
    ph = np.array(phases0, dtype=np.float64)
    traj = Trajectory()
    best_total = -math.inf
    for step in range(steps + 1):
        foms, gz, gph = grad_fn(z, ph)
        foms = np.asarray(foms, dtype=np.float64)
        if not np.all(np.isfinite(foms)):
            raise OptimizationError(step, f"non-finite figure of merit {foms}")
        traj.foms.append(foms.copy())
        if foms.sum() > best_total:
            best_total = float(foms.sum())
            traj.best_z, traj.best_phases, traj.best_fom = z.copy(), ph.copy(), foms.copy()
        if step == steps:
            break
        c, d = min_norm_weights(gz)
        traj.weights.append(c)
        if np.linalg.norm(d) < tol:
            traj.stopped_stationary = True
            break
        if eta_s:
            for t in range(len(ph)):
                ph[t] = project_phase(ph[t] + _scaled(np.asarray(gph[t]), eta_s, normalize))
        if eta_a:
            z = project_z(z + _scaled(d, eta_a, normalize))
    traj.final_z, traj.final_phases = z, ph
    return traj


# ---------------------------------------------------------------------------
# design problem

@dataclass
class DesignState:
    z: np.ndarray
    phases: np.ndarray          # (T, 6)
    fom: np.ndarray             # (T,)
    source: str = "surrogate"   # or "oracle"


@dataclass
class TaskSet:
    labels: list[str]
    weights: list[np.ndarray]

    def __post_init__(self):
        if not self.weights or len(self.labels) != len(self.weights):
            raise ValueError("need at least one task and one label per task")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for w in self.weights:
            if w.shape != (3, 3) or not np.all(np.isfinite(w)):
                raise ValueError("task weights must be finite 3x3 matrices")

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "TaskSet":
        unknown = [n for n in names if n not in oracle.TASK_WEIGHTS]
        if unknown:
            raise ValueError(f"unknown task(s) {unknown}; choose from {sorted(oracle.TASK_WEIGHTS)}")
        return cls(list(names), [oracle.TASK_WEIGHTS[n] for n in names])


class DesignProblem:
    """Differentiable map from (z, per-task phases) to surrogate FoMs, plus oracle scoring."""

    def __init__(self, model: IfnoModel, n: int, mean, std, z_lo, z_hi, scale: float,
                 tasks: TaskSet, tau: float = DEFAULT_TAU, threshold: float = shapes.DEFAULT_THRESHOLD,
                 transform: str = "log1p", constants: oracle.OracleConstants = oracle.DEFAULT_CONSTANTS):
        self.model, self.n, self.tasks = model, n, tasks
        self.mean, self.std = np.asarray(mean, np.float64), np.asarray(std, np.float64)
        self.z_lo, self.z_hi = np.asarray(z_lo, np.float64), np.asarray(z_hi, np.float64)
        self.scale, self.tau, self.threshold = float(scale), float(tau), threshold
        self.transform, self.constants = transform, constants
        self.g = oracle.CELLS * n
        if self.g < model.config.modes:
            raise ValueError(f"grid {self.g} smaller than the model's {model.config.modes} modes")
        d = len(self.mean)
        # level set is linear in the feature: raw = basis @ feature
        self.basis = np.stack([shapes.levelset_raw(e, n).ravel() for e in np.eye(d)], axis=1)
        c = ((np.arange(self.g) + 0.5) / self.g)
        self._coords = (np.broadcast_to(c[None, :], (self.g, self.g)), np.broadcast_to(c[:, None], (self.g, self.g)))
        self._weights_px = np.stack([np.kron(w, np.ones((n, n))) for w in tasks.weights])

    @classmethod
    def from_ground_set(cls, model: IfnoModel, ground_set: shapes.GroundSet, n: int, scale: float,
                        tasks: TaskSet, **kw) -> "DesignProblem":
        lo, hi = clamp_box(ground_set.standardized())
        return cls(model, n, ground_set.mean, ground_set.std, lo, hi, scale, tasks, **kw)

    # -- constraints ------------------------------------------------------
    def project_z(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.z_lo, self.z_hi)

    @staticmethod
    def project_phase(p: np.ndarray) -> np.ndarray:
        return stimulus.project(p)

    def feature(self, z: np.ndarray) -> np.ndarray:
        return self.mean + self.std * np.asarray(z, np.float64)

    def random_state(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        z = self.z_lo + rng.random(len(self.z_lo)) * (self.z_hi - self.z_lo)
        phases = np.stack([stimulus.random_params(rng) for _ in range(len(self.tasks))])
        return z, phases

    # -- surrogate chain --------------------------------------------------
    def relaxed_indicator(self, z: np.ndarray):
        raw = self.basis @ self.feature(z)
        lo_i, hi_i = int(np.argmin(raw)), int(np.argmax(raw))
        rng_ = raw[hi_i] - raw[lo_i]
        if rng_ <= 0:
            raise ValueError("flat level set: the feature carries no shape")
        level = (raw - raw[lo_i]) / rng_
        chi = 1.0 / (1.0 + np.exp(-(level - self.threshold) / self.tau))
        return chi.reshape(self.n, self.n), (level, lo_i, hi_i, rng_, chi)

    def _indicator_backward(self, g_chi: np.ndarray, aux) -> np.ndarray:
        level, lo_i, hi_i, rng_, chi = aux
        g_level = g_chi.ravel() * chi * (1.0 - chi) / self.tau
        g_raw = g_level / rng_
        g_raw[lo_i] -= np.sum(g_level * (1.0 - level)) / rng_
        g_raw[hi_i] -= np.sum(g_level * level) / rng_
        return self.std * (self.basis.T @ g_raw)

    def surrogate(self, z: np.ndarray, phases: np.ndarray, need_grad: bool = True):
        """Surrogate FoM per task and, optionally, gradients with respect to z and each phase vector."""
        phases = np.atleast_2d(phases)
        t_count = len(self.tasks)
        if len(phases) != t_count:
            raise ValueError(f"{len(phases)} phase vectors for {t_count} tasks")
        chi, aux = self.relaxed_indicator(z)
        chi_t = oracle.tile(chi)
        dtype = self.model.dtype
        a = np.empty((t_count, 4, self.g, self.g), dtype=dtype)
        for t in range(t_count):
            a[t, 0], a[t, 1] = self._coords
            a[t, 2] = chi_t
            a[t, 3] = stimulus.phase_field(phases[t], self.g, check=False)
        out, cache = forward(self.model, a)
        u = out[:, 0].astype(np.float64)
        # energy is non-negative; a surrogate undershoot below zero carries no gradient
        energy = np.maximum(from_target(u, self.scale, self.transform), 0.0)
        patches = oracle.patch_sums(energy)                    # (T, 3, 3)
        total = patches.sum(axis=(1, 2))
        if np.any(total <= 0) or not np.all(np.isfinite(total)):
            raise DegenerateSurrogateError("surrogate field carries no usable energy")
        w = np.stack(self.tasks.weights)
        foms = np.sum(w * patches, axis=(1, 2)) / total
        if not need_grad:
            return foms, None, None
        # dJ/dE per pixel = (W - J) / S on the pixel's patch
        g_e = (self._weights_px - foms[:, None, None]) / total[:, None, None]
        du = g_e * (self.scale * np.exp(u) if self.transform == "log1p" else 1.0) * (energy > 0)
        _, da = backward(self.model, cache, du[:, None].astype(dtype))
        da = da.astype(np.float64)
        gz = np.empty((t_count, len(self.mean)))
        gph = np.empty((t_count, stimulus.N_PARAMS))
        for t in range(t_count):
            g_chi = _fold_tiles(da[t, 2], self.n)
            gz[t] = self._indicator_backward(g_chi, aux)
            jac = stimulus.phase_jacobian(phases[t], self.g)
            gph[t] = np.tensordot(jac, da[t, 3], axes=([1, 2], [0, 1]))
        return foms, gz, gph

    # -- oracle scoring ---------------------------------------------------
    def binarize(self, z: np.ndarray) -> np.ndarray:
        return shapes.decode(self.feature(z), self.n, self.threshold)[1]

    def oracle_foms(self, z: np.ndarray, phases: np.ndarray) -> np.ndarray:
        """Hard-binarized design scored by the oracle; ``-inf`` when the field is empty."""
        chi = self.binarize(z)
        amp = oracle.source_amplitude(oracle.tile(chi), self.n, self.constants)
        out = np.empty(len(self.tasks))
        for t, w in enumerate(self.tasks.weights):
            field_ = oracle.simulate_from_amplitude(amp, stimulus.phase_field(phases[t], self.g), self.n,
                                                    self.constants)
            try:
                out[t] = oracle.fom(oracle.response_matrix(field_), w)
            except oracle.DegenerateResponseError:
                out[t] = -math.inf
        return out

    def oracle_fields(self, z: np.ndarray, phases: np.ndarray) -> list[np.ndarray]:
        chi = self.binarize(z)
        return [oracle.simulate(chi, stimulus.phase_field(p, self.g), self.constants) for p in phases]


def _fold_tiles(a: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of tiling: sum the 3x3 copies back onto one tile."""
    return a.reshape(oracle.CELLS, n, oracle.CELLS, n).sum(axis=(0, 2))


def clamp_box(standardized: np.ndarray, margin: float = BOX_MARGIN) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(standardized, dtype=np.float64)
    lo, hi = z.min(axis=0), z.max(axis=0)
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


# ---------------------------------------------------------------------------
# drivers

def _grad_fn(problem: DesignProblem) -> GradFn:
    return lambda z, ph: problem.surrogate(z, ph)


def optimize_multi(problem: DesignProblem, z0, phases0, steps: int = DEFAULT_STEPS,
                   eta_a: float = DEFAULT_ETA_A, eta_s: float = DEFAULT_ETA_S,
                   normalize: bool = True) -> Trajectory:
    return concurrent_ascent(_grad_fn(problem), problem.project_z(np.asarray(z0, np.float64)),
                             np.stack([stimulus.project(p) for p in np.atleast_2d(phases0)]),
                             steps, eta_a, eta_s, problem.project_z, problem.project_phase, normalize)


def optimize_single(problem: DesignProblem, task: int, z0, phase0, steps: int = DEFAULT_STEPS,
                    eta_a: float = DEFAULT_ETA_A, eta_s: float = DEFAULT_ETA_S,
                    normalize: bool = True) -> tuple[DesignState, Trajectory]:
    """Single-task ascent; returns the oracle-scored best surrogate state and the trajectory."""
    sub = DesignProblem(problem.model, problem.n, problem.mean, problem.std, problem.z_lo, problem.z_hi,
                        problem.scale, TaskSet([problem.tasks.labels[task]], [problem.tasks.weights[task]]),
                        problem.tau, problem.threshold, problem.transform, problem.constants)
    traj = optimize_multi(sub, z0, np.atleast_2d(phase0), steps, eta_a, eta_s, normalize)
    fom = sub.oracle_foms(traj.best_z, traj.best_phases)
    return DesignState(traj.best_z, traj.best_phases, fom, "oracle"), traj


@dataclass
class ParetoResult:
    labels: list[str]
    surrogate: np.ndarray       # (R, T) surrogate FoMs of the final states
    oracle: np.ndarray          # (R, T) oracle FoMs of the binarized final states
    states: list[DesignState]
    pareto: list[int]
    seed: int

    @property
    def pareto_oracle(self) -> np.ndarray:
        return self.oracle[self.pareto]

    def rows(self) -> list[list]:
        flags = set(self.pareto)
        return [[r, *self.surrogate[r], *self.oracle[r], int(r in flags)] for r in range(len(self.states))]

    def header(self) -> list[str]:
        return (["restart_id"] + [f"J_{l}_surrogate" for l in self.labels]
                + [f"J_{l}_oracle" for l in self.labels] + ["pareto"])

    def save(self, directory, problem: DesignProblem | None = None) -> None:
        """Write the restart table and, for each Pareto member, its feature, phases and field images."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        io.write_csv(d / "restarts.csv", self.header(), self.rows())
        for r in self.pareto:
            s = self.states[r]
            md = d / f"member_{r:03d}"
            md.mkdir(exist_ok=True)
            feature = problem.feature(s.z) if problem is not None else s.z
            io.write_tensor(md / "feature.mmt", np.asarray(feature, dtype=np.float64))
            io.write_json(md / "phases.json", {
                "labels": self.labels, "z": s.z.tolist(), "phases": s.phases.tolist(),
                "oracle_fom": self.oracle[r].tolist(), "surrogate_fom": self.surrogate[r].tolist()})
            if problem is not None:
                for label, f in zip(self.labels, problem.oracle_fields(s.z, s.phases)):
                    io.export_pgm(f, md / f"field_{label}.pgm", scaling="log1p")


def _one_restart(r: int, problem: DesignProblem, seed: int, steps: int, eta_a: float, eta_s: float,
                 pick: str):
    rng = np.random.default_rng([seed, r])
    z0, ph0 = problem.random_state(rng)
    traj = optimize_multi(problem, z0, ph0, steps, eta_a, eta_s)
    z, ph = (traj.best_z, traj.best_phases) if pick == "best" else (traj.final_z, traj.final_phases)
    surr, _, _ = problem.surrogate(z, ph, need_grad=False)
    return z, ph, surr, problem.oracle_foms(z, ph)


def run_restarts(problem: DesignProblem, n_rep: int, seed: int = 0, steps: int = DEFAULT_STEPS,
                 eta_a: float = DEFAULT_ETA_A, eta_s: float = DEFAULT_ETA_S, jobs: int = 1,
                 order: Sequence[int] | None = None, pick: str = "final") -> ParetoResult:
    """Independent seeded restarts, oracle re-scoring, Pareto extraction.

    Restart ``r`` draws from its own stream ``(seed, r)``, so neither ``jobs``
    nor the execution ``order`` changes the result. ``pick`` chooses which
    state of each run is scored: the last one or the best surrogate one.
    """
    if pick not in ("final", "best"):
        raise ValueError("pick must be 'final' or 'best'")
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    order = list(range(n_rep)) if order is None else list(order)
    if sorted(order) != list(range(n_rep)):
        raise ValueError("order must be a permutation of the restart indices")
    work = partial(_one_restart, problem=problem, seed=seed, steps=steps, eta_a=eta_a, eta_s=eta_s,
                   pick=pick)
    if jobs > 1 and n_rep > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = dict(zip(order, pool.map(work, order)))
    else:
        done = {r: work(r) for r in order}
    outs = [done[r] for r in range(n_rep)]
    surr = np.array([o[2] for o in outs])
    orc = np.array([o[3] for o in outs])
    states = [DesignState(o[0], o[1], o[3], "oracle") for o in outs]
    return ParetoResult(list(problem.tasks.labels), surr, orc, states, pareto_filter(orc), seed)


def random_designs(problem: DesignProblem, count: int, seed: int = 0) -> np.ndarray:
    """Oracle FoMs ``(count, T)`` of uniformly random designs from the clamp box and phase bounds."""
    out = np.empty((count, len(problem.tasks)))
    for i in range(count):
        z, ph = problem.random_state(np.random.default_rng([seed, 1_000_003, i]))
        out[i] = problem.oracle_foms(z, ph)
    return out
