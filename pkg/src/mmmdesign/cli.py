"""Command-line entry point: ``mmmdesign <group> [<action>] [flags]``.

Every artifact-producing command writes a ``manifest.json`` next to its
outputs. Flag values override ``--config`` JSON values, which override the
built-in defaults. Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, acquire, io, oracle, optimize, shapes, stimulus
from .ifno import IfnoConfig, IfnoModel, predict as ifno_predict
from .train import TrainConfig, from_target, shallow_to_deep, train, write_history

log = logging.getLogger("mmmdesign")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ValueError, KeyError, io.FormatError, io.SchemaError, FileNotFoundError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; this tool reserves 2 for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# option plumbing

def _common(p: argparse.ArgumentParser, jobs: bool = False) -> None:
    p.add_argument("--seed", type=int, default=None, help="global seed (integer; falls back to $MMM_SEED, then 0)")
    p.add_argument("--config", type=Path, default=None, help="JSON file of option values (flags take precedence)")
    p.add_argument("--out", type=Path, required=False, default=None, help="output path (file or directory)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if jobs:
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (count; default: available cores); results do not depend on it")


class Options:
    """Resolved option values: flag > config file > default."""

    def __init__(self, args: argparse.Namespace, defaults: dict):
        self._args = args
        cfg = {}
        if getattr(args, "config", None):
            cfg = io.read_json(args.config)
            if not isinstance(cfg, dict):
                raise ValueError("--config must hold a JSON object")
        self.config = cfg
        self.values = {}
        for key, default in defaults.items():
            flag = getattr(args, key, None)
            self.values[key] = flag if flag is not None else cfg.get(key, default)
        seed = getattr(args, "seed", None)
        if seed is None:
            seed = cfg.get("seed", os.environ.get("MMM_SEED", 0))
        self.values["seed"] = int(seed)
        if hasattr(args, "jobs"):
            jobs = args.jobs if args.jobs is not None else cfg.get("jobs", os.cpu_count() or 1)
            if int(jobs) < 1:
                raise ValueError("--jobs must be >= 1")
            self.values["jobs"] = int(jobs)
        out = args.out if args.out is not None else cfg.get("out")
        if out is None:
            raise ValueError("--out is required")
        self.values["out"] = Path(out)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


def _csv_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _csv_strings(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(x) for x in text]
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _load_phase(spec) -> np.ndarray:
    """A phase vector from 'a,b,c,d,e,f' or a JSON file holding a list (or {'phases': [...]})."""
    if isinstance(spec, (list, tuple)):
        return stimulus.validate_params(spec)
    path = Path(str(spec))
    if path.exists():
        obj = io.read_json(path)
        if isinstance(obj, dict):
            obj = obj["phases"]
        arr = np.asarray(obj, dtype=np.float64)
        return stimulus.validate_params(arr[0] if arr.ndim == 2 else arr)
    return stimulus.validate_params(_csv_floats(spec))


def _load_phase_table(path) -> np.ndarray:
    header, rows = io.read_csv(path)
    cols = [header.index(n) for n in stimulus.PARAM_NAMES]
    return np.array([[float(r[c]) for c in cols] for r in rows])


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.suffix == "" else out.with_name(out.name + ".manifest.json")


def write_manifest(opts: Options, command: str, inputs: dict, outputs: list, started: float, extra=None) -> None:
    out = opts.out
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": opts.seed,
        "config": str(opts._args.config) if opts._args.config else None,
        "config_values": opts.config,
        "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in opts.values.items()},
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": [str(o) for o in outputs],
        "versions": {
            "oracle": oracle.DEFAULT_CONSTANTS.version,
            "generator": shapes.GENERATOR_VERSION,
            "dataset": acquire.DATASET_VERSION,
        },
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    io.write_json(_manifest_path(out), manifest)


def _ensure_dir(p: Path) -> Path:
    p.mkdir(parents=True, exist_ok=True)
    return p


def _ensure_parent(p: Path) -> Path:
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _model_meta(model_path) -> tuple[IfnoModel, dict]:
    archive = io.read_model(model_path)
    return IfnoModel.from_archive(archive), archive.config


# ---------------------------------------------------------------------------
# command implementations

def cmd_shapes_gen(args) -> int:
    t0 = time.time()
    o = Options(args, {"count": 100, "n": 64, "m": shapes.DEFAULT_M, "nb_min": 2, "nb_max": 4})
    gs = shapes.build_ground_set(int(o.count), seed=o.seed, n=int(o.n), m=int(o.m),
                                 n_b_range=(int(o.nb_min), int(o.nb_max)))
    gs.save(_ensure_dir(o.out))
    write_manifest(o, "shapes gen", {}, [o.out / "features.mmt", o.out / "ground_set.json"], t0)
    return EXIT_OK


def cmd_shapes_encode(args) -> int:
    t0 = time.time()
    o = Options(args, {"image": None, "m": shapes.DEFAULT_M})
    img = (io.read_pgm(o.image) > 127).astype(np.uint8)
    io.write_tensor(_ensure_parent(o.out), shapes.encode(img, int(o.m)))
    write_manifest(o, "shapes encode", {"image": o.image}, [o.out], t0)
    return EXIT_OK


def cmd_shapes_decode(args) -> int:
    t0 = time.time()
    o = Options(args, {"feature": None, "n": 64})
    _, img = shapes.decode(io.read_tensor(o.feature), int(o.n))
    io.export_pgm(img.astype(np.float64), _ensure_parent(o.out))
    write_manifest(o, "shapes decode", {"feature": o.feature}, [o.out], t0)
    return EXIT_OK


def cmd_shapes_blend(args) -> int:
    t0 = time.time()
    o = Options(args, {"classes": None, "weights": None, "n": 64, "m": shapes.DEFAULT_M})
    classes = _csv_strings(o.classes)
    bad = [c for c in classes if c not in shapes.CLASSES]
    if bad:
        raise ValueError(f"unknown class(es) {bad}; choose from {list(shapes.CLASSES)}")
    reps = shapes.representative_features(int(o.n), int(o.m))
    z = shapes.blend(reps[[shapes.CLASSES.index(c) for c in classes]], _csv_floats(o.weights))
    io.write_tensor(_ensure_parent(o.out), z)
    write_manifest(o, "shapes blend", {}, [o.out], t0)
    return EXIT_OK


def cmd_acquire_diverse(args) -> int:
    t0 = time.time()
    o = Options(args, {"ground_set": None, "k": 64})
    gs = shapes.GroundSet.load(o.ground_set)
    idx = acquire.select_diverse(gs.standardized(), int(o.k), standardized=True)
    io.write_json(_ensure_parent(o.out), {"indices": idx, "ground_set": str(o.ground_set)})
    write_manifest(o, "acquire diverse", {"ground_set": o.ground_set}, [o.out], t0)
    return EXIT_OK


def cmd_acquire_lhs(args) -> int:
    t0 = time.time()
    o = Options(args, {"n": 8, "restarts": 1000})
    p = acquire.lhs_phases(int(o.n), o.seed, int(o.restarts))
    io.write_csv(_ensure_parent(o.out), ("index",) + stimulus.PARAM_NAMES,
                 ([i, *map(float, row)] for i, row in enumerate(p)))
    write_manifest(o, "acquire lhs", {}, [o.out], t0)
    return EXIT_OK


def cmd_dataset_build(args) -> int:
    t0 = time.time()
    o = Options(args, {"ground_set": None, "selection": None, "phases": None, "n": 32, "split": 0.8})
    gs = shapes.GroundSet.load(o.ground_set)
    idx = io.read_json(o.selection)["indices"] if o.selection else list(range(len(gs.features)))
    ds = acquire.build_dataset(gs.features[idx], _load_phase_table(o.phases), int(o.n),
                               split=float(o.split), seed=o.seed, jobs=o.jobs, shape_ids=idx)
    ds.meta["ground_set"] = {"path": str(o.ground_set), "mean": gs.mean.tolist(), "std": gs.std.tolist()}
    ds.save(_ensure_dir(o.out))
    write_manifest(o, "dataset build", {"ground_set": o.ground_set, "selection": o.selection, "phases": o.phases},
                   [o.out / "inputs.mmt", o.out / "targets.mmt", o.out / "dataset.json"], t0)
    return EXIT_OK


def cmd_oracle_simulate(args) -> int:
    from .plotting import plot_field
    t0 = time.time()
    o = Options(args, {"feature": None, "phase": None, "n": 32})
    n = int(o.n)
    _, chi = shapes.decode(io.read_tensor(o.feature), n)
    field_ = oracle.simulate(chi, stimulus.phase_field(_load_phase(o.phase), oracle.CELLS * n))
    out = _ensure_dir(o.out)
    io.write_tensor(out / "field.mmt", field_)
    rows = []
    try:
        resp = oracle.response_matrix(field_)
        rows = [[name, oracle.fom(resp, w)] for name, w in oracle.TASK_WEIGHTS.items()]
        io.write_csv(out / "response.csv", ("row", "c0", "c1", "c2"), ([i, *map(float, r)] for i, r in enumerate(resp)))
    except oracle.DegenerateResponseError:
        log.warning("field carries no energy; no response matrix written")
    io.write_csv(out / "fom.csv", ("task", "fom"), rows)
    plot_field(field_, out / "field.png", "oracle |E|^2")
    write_manifest(o, "oracle simulate", {"feature": o.feature}, [out / "field.mmt", out / "field.png"], t0)
    return EXIT_OK


TRAIN_DEFAULTS = {"dataset": None, "modes": 16, "width": 16, "lastwidth": 32, "depth": 4, "epochs": 200,
                  "lr": 0.005, "gamma": 0.5, "n_step": 50, "weight_decay": 1e-5, "batch_size": 2,
                  "loss": "relative_l2", "transform": "log1p", "augment": False, "init": None,
                  "promote_depth": None}


def cmd_train(args) -> int:
    from .plotting import plot_history
    t0 = time.time()
    o = Options(args, TRAIN_DEFAULTS)
    ds = acquire.Dataset.load(o.dataset)
    icfg = IfnoConfig(int(o.modes), int(o.width), int(o.lastwidth), int(o.depth))
    tcfg = TrainConfig(float(o.lr), float(o.gamma), int(o.n_step), float(o.weight_decay), int(o.epochs),
                       int(o.batch_size), o.seed, o.loss, o.transform, bool(o.augment))
    init = None
    if o.init:
        init, _ = _model_meta(o.init)
        if o.promote_depth:
            init = shallow_to_deep(init, int(o.promote_depth), ds, o.transform)
        icfg = init.config
    model, history = train(ds, icfg, tcfg, init=init)
    out = _ensure_dir(o.out)
    extra = {"scale": ds.scale, "target_transform": o.transform, "n": ds.meta["n"],
             "train_config": tcfg.to_dict()}
    model.save(out / "model.mma", extra)
    write_history(out / "history.csv", history)
    if history:
        plot_history(history, out / "loss.png")
    write_manifest(o, "train", {"dataset": o.dataset, "init": o.init},
                   [out / "model.mma", out / "history.csv"], t0,
                   {"final": history[-1] if history else None})
    return EXIT_OK


def cmd_predict(args) -> int:
    t0 = time.time()
    o = Options(args, {"model": None, "shape": None, "phase": None, "n": None})
    model, meta = _model_meta(o.model)
    n = int(o.n if o.n is not None else meta.get("n", 32))
    _, chi = shapes.decode(io.read_tensor(o.shape), n)
    a = acquire.sample_inputs(chi, _load_phase(o.phase), n)[None]
    u = ifno_predict(model, a)[0, 0].astype(np.float64)
    energy = from_target(u, float(meta.get("scale", 1.0)), meta.get("target_transform", "log1p"))
    io.write_tensor(_ensure_parent(o.out), energy)
    write_manifest(o, "predict", {"model": o.model, "shape": o.shape}, [o.out], t0)
    return EXIT_OK


OPT_DEFAULTS = {"model": None, "ground_set": None, "tasks": "W1,W2,W3_focus", "task": None, "n_rep": 20,
                "steps": optimize.DEFAULT_STEPS, "eta_a": optimize.DEFAULT_ETA_A, "eta_s": optimize.DEFAULT_ETA_S,
                "tau": optimize.DEFAULT_TAU, "n": None, "baseline": 0}


def _optimize(args, single: bool) -> int:
    from .plotting import plot_pareto
    t0 = time.time()
    o = Options(args, OPT_DEFAULTS)
    model, meta = _model_meta(o.model)
    gs = shapes.GroundSet.load(o.ground_set)
    names = _csv_strings(o.task if single and o.task else o.tasks)
    if single and len(names) != 1:
        raise ValueError("optimize single takes exactly one task (--task)")
    if not single and len(names) < 2:
        raise ValueError("optimize multi needs at least two tasks")
    tasks = optimize.TaskSet.from_names(names)
    n = int(o.n if o.n is not None else meta.get("n", 32))
    problem = optimize.DesignProblem.from_ground_set(model, gs, n, float(meta.get("scale", 1.0)), tasks,
                                                     tau=float(o.tau),
                                                     transform=meta.get("target_transform", "log1p"))
    res = optimize.run_restarts(problem, int(o.n_rep), o.seed, int(o.steps), float(o.eta_a), float(o.eta_s),
                                jobs=o.jobs, pick="best" if single else "final")
    out = _ensure_dir(o.out)
    res.save(out, problem)
    outputs = [out / "restarts.csv"]
    extra = {"pareto": res.pareto}
    if int(o.baseline) > 0:
        base = optimize.random_designs(problem, int(o.baseline), o.seed)
        io.write_csv(out / "random_baseline.csv", [f"J_{l}_oracle" for l in names], base.tolist())
        extra["members_beating_median"] = optimize.dominates_median(res.pareto_oracle, base).tolist()
        outputs.append(out / "random_baseline.csv")
    if len(names) >= 2:
        plot_pareto(res.oracle, res.pareto, names, out / "pareto.png")
        outputs.append(out / "pareto.png")
    write_manifest(o, f"optimize {'single' if single else 'multi'}", {"model": o.model, "ground_set": o.ground_set},
                   outputs, t0, extra)
    return EXIT_OK


def _fom_columns(header: list[str], rows: list[list[str]], columns) -> np.ndarray:
    if columns:
        names = _csv_strings(columns)
    else:
        names = [h for h in header if h.endswith("_oracle")] or [h for h in header if h.startswith("J_")]
    missing = [c for c in names if c not in header]
    if missing or not names:
        raise ValueError(f"columns {missing or names} not found in {header}")
    idx = [header.index(c) for c in names]
    return np.array([[float(r[i]) for i in idx] for r in rows])


def cmd_pareto_filter(args) -> int:
    t0 = time.time()
    o = Options(args, {"csv": None, "columns": None, "orientation": "max"})
    header, rows = io.read_csv(o.csv)
    keep = optimize.pareto_filter(_fom_columns(header, rows, o.columns), o.orientation)
    io.write_csv(_ensure_parent(o.out), header, [rows[i] for i in keep])
    write_manifest(o, "pareto filter", {"csv": o.csv}, [o.out], t0, {"indices": keep})
    return EXIT_OK


def cmd_pareto_select(args) -> int:
    t0 = time.time()
    o = Options(args, {"csv": None, "columns": None, "weights": None})
    header, rows = io.read_csv(o.csv)
    f = _fom_columns(header, rows, o.columns)
    keep = optimize.pareto_filter(f)
    pos = optimize.importance_select(f[keep], _csv_floats(o.weights))
    io.write_json(_ensure_parent(o.out), {"row": keep[pos], "pareto_rows": keep, "record": dict(zip(header, rows[keep[pos]]))})
    write_manifest(o, "pareto select", {"csv": o.csv}, [o.out], t0)
    return EXIT_OK


def cmd_export_pgm(args) -> int:
    t0 = time.time()
    o = Options(args, {"field": None, "scaling": "linear"})
    io.export_pgm(io.read_tensor(o.field), _ensure_parent(o.out), o.scaling)
    write_manifest(o, "export pgm", {"field": o.field}, [o.out], t0)
    return EXIT_OK


def cmd_export_csv(args) -> int:
    t0 = time.time()
    o = Options(args, {"field": None})
    f = np.asarray(io.read_tensor(o.field), dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {f.shape}")
    io.write_csv(_ensure_parent(o.out), [f"x{i}" for i in range(f.shape[1])], f.tolist())
    write_manifest(o, "export csv", {"field": o.field}, [o.out], t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmmdesign", description="Metasurface architecture-stimulus design toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def action(group_parser, name, func, help_, jobs=False):
        p = group_parser.add_parser(name, help=help_, description=help_)
        _common(p, jobs)
        p.set_defaults(func=func)
        return p

    g = groups.add_parser("shapes", help="ground-set synthesis and Fourier features")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "gen", cmd_shapes_gen, "synthesize a blended ground set (directory output)")
    p.add_argument("--count", type=int, help="number of meta-atoms (default 100)")
    p.add_argument("--n", type=int, help="tile resolution in pixels (default 64)")
    p.add_argument("--m", type=int, help="feature order; the feature has (m+1)^2 entries (default 5)")
    p.add_argument("--nb-min", dest="nb_min", type=int, help="fewest classes per blend (default 2)")
    p.add_argument("--nb-max", dest="nb_max", type=int, help="most classes per blend (default 4)")
    p = action(sub, "encode", cmd_shapes_encode, "binary PGM image -> Fourier feature TensorFile")
    p.add_argument("--image", type=Path, help="P5 image; pixels > 127 are material")
    p.add_argument("--m", type=int, help="feature order (default 5)")
    p = action(sub, "decode", cmd_shapes_decode, "Fourier feature -> binary PGM image")
    p.add_argument("--feature", type=Path, help="feature TensorFile")
    p.add_argument("--n", type=int, help="output resolution in pixels (default 64)")
    p = action(sub, "blend", cmd_shapes_blend, "convex blend of class representatives -> feature TensorFile")
    p.add_argument("--classes", help=f"comma list from {','.join(shapes.CLASSES)}")
    p.add_argument("--weights", help="comma list of non-negative weights summing to 1")
    p.add_argument("--n", type=int, help="representative resolution in pixels (default 64)")
    p.add_argument("--m", type=int, help="feature order (default 5)")

    g = groups.add_parser("acquire", help="shape and phase sample selection")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "diverse", cmd_acquire_diverse, "farthest-point subset of a ground set (JSON output)")
    p.add_argument("--ground-set", dest="ground_set", type=Path, help="directory written by 'shapes gen'")
    p.add_argument("--k", type=int, help="subset size (count, default 64)")
    p = action(sub, "lhs", cmd_acquire_lhs, "maximin Latin hypercube of phase parameters (CSV output, radians)")
    p.add_argument("--n", type=int, help="number of phase samples (default 8)")
    p.add_argument("--restarts", type=int, help="random hypercubes compared for maximin (default 1000)")

    g = groups.add_parser("dataset", help="oracle-labelled training data")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "build", cmd_dataset_build, "label every shape x phase pair (directory output)", jobs=True)
    p.add_argument("--ground-set", dest="ground_set", type=Path, help="directory written by 'shapes gen'")
    p.add_argument("--selection", type=Path, help="JSON from 'acquire diverse' (default: whole ground set)")
    p.add_argument("--phases", type=Path, help="CSV from 'acquire lhs'")
    p.add_argument("--n", type=int, help="tile resolution in pixels; grid is 3n (default 32)")
    p.add_argument("--split", type=float, help="fraction of shapes used for training (default 0.8)")

    g = groups.add_parser("oracle", help="synthetic field solver")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "simulate", cmd_oracle_simulate, "|E|^2 on the supercell plus FoMs (directory output)")
    p.add_argument("--feature", type=Path, help="feature TensorFile")
    p.add_argument("--phase", help="six comma-separated values (radians) or a JSON file")
    p.add_argument("--n", type=int, help="tile resolution in pixels (default 32)")

    p = action(groups, "train", cmd_train, "fit the operator surrogate (directory output)")
    p.add_argument("--dataset", type=Path, help="directory written by 'dataset build'")
    p.add_argument("--modes", type=int, help="retained modes per axis (default 16)")
    p.add_argument("--width", type=int, help="hidden channels (default 16)")
    p.add_argument("--lastwidth", type=int, help="projection hidden channels (default 32)")
    p.add_argument("--depth", type=int, help="shared-layer applications (default 4)")
    p.add_argument("--epochs", type=int, help="passes over the training split (default 200)")
    p.add_argument("--lr", type=float, help="initial learning rate (default 0.005)")
    p.add_argument("--gamma", type=float, help="decay factor per n-step epochs (default 0.5)")
    p.add_argument("--n-step", dest="n_step", type=int, help="epochs between decays (default 50)")
    p.add_argument("--weight-decay", dest="weight_decay", type=float, help="decoupled weight decay (default 1e-5)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="samples per step (default 2)")
    p.add_argument("--loss", choices=["relative_l2", "mse"], help="training loss (default relative_l2)")
    p.add_argument("--transform", choices=["log1p", "identity"], help="target transform (default log1p)")
    p.add_argument("--augment", action="store_true", default=None,
                   help="train on random square symmetries of each sample (default off)")
    p.add_argument("--init", type=Path, help="model archive to start from")
    p.add_argument("--promote-depth", dest="promote_depth", type=int, help="reuse --init at this larger depth")

    p = action(groups, "predict", cmd_predict, "surrogate |E|^2 for one shape and phase (TensorFile output)")
    p.add_argument("--model", type=Path, help="model archive from 'train'")
    p.add_argument("--shape", type=Path, help="feature TensorFile")
    p.add_argument("--phase", help="six comma-separated values (radians) or a JSON file")
    p.add_argument("--n", type=int, help="tile resolution in pixels (default: the training resolution)")

    g = groups.add_parser("optimize", help="concurrent shape and phase design")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, single in (("single", True), ("multi", False)):
        p = action(sub, name, (lambda a, s=single: _optimize(a, s)),
                   f"{'one task' if single else 'several tasks'}, seeded restarts (directory output)", jobs=True)
        p.add_argument("--model", type=Path, help="model archive from 'train'")
        p.add_argument("--ground-set", dest="ground_set", type=Path, help="ground set defining the z box")
        if single:
            p.add_argument("--task", help=f"one of {','.join(oracle.TASK_WEIGHTS)}")
        else:
            p.add_argument("--tasks", help="comma list of task names (default W1,W2,W3_focus)")
        p.add_argument("--n-rep", dest="n_rep", type=int, help="random restarts (count, default 20)")
        p.add_argument("--steps", type=int, help="ascent steps per restart (default 300)")
        p.add_argument("--eta-a", dest="eta_a", type=float, help="shape step, standardized units (default 0.05)")
        p.add_argument("--eta-s", dest="eta_s", type=float, help="phase step in radians (default 0.1)")
        p.add_argument("--tau", type=float, help="indicator relaxation width, level-set units (default 0.02)")
        p.add_argument("--n", type=int, help="tile resolution in pixels (default: the training resolution)")
        p.add_argument("--baseline", type=int, help="random designs scored for comparison (count, default 0)")

    g = groups.add_parser("pareto", help="post-processing of restart tables")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "filter", cmd_pareto_filter, "keep non-dominated rows of a CSV (CSV output)")
    p.add_argument("--csv", type=Path, help="restart table")
    p.add_argument("--columns", help="comma list of FoM columns (default: the *_oracle columns)")
    p.add_argument("--orientation", choices=["max", "min"], help="larger or smaller is better (default max)")
    p = action(sub, "select", cmd_pareto_select, "importance-weighted pick among non-dominated rows (JSON output)")
    p.add_argument("--csv", type=Path, help="restart table")
    p.add_argument("--columns", help="comma list of FoM columns (default: the *_oracle columns)")
    p.add_argument("--weights", help="comma list of non-negative task importances")

    g = groups.add_parser("export", help="field conversion")
    sub = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = action(sub, "pgm", cmd_export_pgm, "field TensorFile -> 8-bit P5 image")
    p.add_argument("--field", type=Path, help="2-D field TensorFile")
    p.add_argument("--scaling", choices=["linear", "log1p"], help="intensity mapping (default linear)")
    p = action(sub, "csv", cmd_export_csv, "field TensorFile -> CSV grid (one row per image row)")
    p.add_argument("--field", type=Path, help="2-D field TensorFile")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
