"""Implicit Fourier neural operator with hand-written reverse-mode gradients.

Layout: pointwise lift ``R`` -> ``depth`` applications of one shared layer
``v <- v + gelu(W v + c + S v) / depth`` -> pointwise projection ``Q``.
``S`` multiplies the lowest ``modes x modes`` block of the full 2-D transform
(non-negative frequency indices on both axes) by a complex channel-mixing
tensor and returns the real part of the inverse transform.

The truncated transforms are dense DFT matrices acting on the grid rather than
FFTs: only ``modes`` frequencies per axis are ever needed, which makes the
matrix form cheaper and turns the adjoint into plain conjugate-transpose
products. Arrays are channels-first: ``(batch, channels, G, G)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import io

_GELU_C = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class IfnoConfig:
    modes: int
    width: int
    lastwidth: int
    depth: int
    in_channels: int = 4
    out_channels: int = 1

    def __post_init__(self):
        for name in ("modes", "width", "lastwidth", "depth", "in_channels", "out_channels"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {"kind": "ifno", **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "IfnoConfig":
        return cls(**{k: int(d[k]) for k in ("modes", "width", "lastwidth", "depth", "in_channels", "out_channels")
                      if k in d})


PAPER_CONFIG = IfnoConfig(modes=64, width=32, lastwidth=64, depth=8)


def count_parameters(config: IfnoConfig) -> int:
    w, m, lw = config.width, config.modes, config.lastwidth
    cin, cout = config.in_channels, config.out_channels
    return (2 * w * w * m * m + w * w + w
            + cin * w + w + w * lw + lw + lw * cout + cout)


# The activation runs on every hidden tensor twice per training step, so it is
# written with in-place ufuncs to avoid allocating a fresh array per operation.
_GELU_K = 0.044715


def _gelu_tanh(x: np.ndarray) -> np.ndarray:
    t = x * x
    t *= _GELU_K
    t += 1.0
    t *= x
    t *= _GELU_C
    return np.tanh(t, out=t)


def gelu(x: np.ndarray) -> np.ndarray:
    y = _gelu_tanh(x)
    y += 1.0
    y *= x
    y *= 0.5
    return y


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = _gelu_tanh(x)
    sech2 = t * t
    np.subtract(1.0, sech2, out=sech2)
    q = x * x
    q *= 3 * _GELU_K
    q += 1.0
    q *= 0.5 * _GELU_C
    q *= x
    q *= sech2
    t += 1.0
    t *= 0.5
    t += q
    return t


GELU = (gelu, gelu_grad)


class IfnoModel:
    """Parameter container. ``params['layer.spectral']`` is complex ``(w_in, w_out, m, m)``."""

    def __init__(self, config: IfnoConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @property
    def dtype(self):
        return self.params["layer.weight"].dtype

    def copy(self) -> "IfnoModel":
        return IfnoModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "IfnoModel":
        cdtype = np.result_type(dtype, np.complex64)
        return IfnoModel(self.config, {
            k: v.astype(cdtype if np.iscomplexobj(v) else dtype) for k, v in self.params.items()})

    def with_depth(self, depth: int) -> "IfnoModel":
        cfg = IfnoConfig(**{**asdict(self.config), "depth": depth})
        return IfnoModel(cfg, {k: v.copy() for k, v in self.params.items()})

    def n_elements(self) -> int:
        """Real scalars actually allocated (complex entries count twice)."""
        return sum(v.size * (2 if np.iscomplexobj(v) else 1) for v in self.params.values())

    def to_archive(self, extra: dict | None = None) -> io.ModelArchive:
        cfg = self.config.to_dict()
        if extra:
            cfg.update(extra)
        tensors = {}
        for k, v in self.params.items():
            tensors[k] = np.stack([v.real, v.imag], axis=-1) if np.iscomplexobj(v) else v
        return io.ModelArchive(json.dumps(cfg, sort_keys=True), tensors)

    @classmethod
    def from_archive(cls, archive: io.ModelArchive) -> "IfnoModel":
        cfg = IfnoConfig.from_dict(archive.config)
        params = {}
        for k, v in archive.tensors.items():
            params[k] = (v[..., 0] + 1j * v[..., 1]) if k == "layer.spectral" else v
        return cls(cfg, params)

    def save(self, path, extra: dict | None = None) -> None:
        io.write_model(path, self.to_archive(extra))

    @classmethod
    def load(cls, path) -> "IfnoModel":
        return cls.from_archive(io.read_model(path))


def init_model(config: IfnoConfig, seed: int = 0, dtype=np.float32) -> IfnoModel:
    rng = np.random.default_rng(seed)
    w, m, lw = config.width, config.modes, config.lastwidth

    def affine(fan_out, fan_in):
        bound = fan_in ** -0.5
        return rng.uniform(-bound, bound, (fan_out, fan_in)), rng.uniform(-bound, bound, fan_out)

    lift_w, lift_b = affine(w, config.in_channels)
    layer_w, layer_b = affine(w, w)
    scale = 1.0 / (w * m)
    spectral = scale * (rng.uniform(-1, 1, (w, w, m, m)) + 1j * rng.uniform(-1, 1, (w, w, m, m)))
    p1_w, p1_b = affine(lw, w)
    p2_w, p2_b = affine(config.out_channels, lw)
    params = {
        "lift.weight": lift_w, "lift.bias": lift_b,
        "layer.weight": layer_w, "layer.bias": layer_b, "layer.spectral": spectral,
        "proj1.weight": p1_w, "proj1.bias": p1_b,
        "proj2.weight": p2_w, "proj2.bias": p2_b,
    }
    return IfnoModel(config, params).astype(dtype)


@lru_cache(maxsize=32)
def _dft(g: int, m: int, dtype_name: str):
    """Truncated DFT operators for a ``g``-point axis and frequencies ``0..m-1``."""
    dtype = np.dtype(dtype_name)
    cdtype = np.result_type(dtype, np.complex64)
    ang = 2.0 * np.pi * np.outer(np.arange(m), np.arange(g)) / g
    fwd = (np.cos(ang) - 1j * np.sin(ang)).astype(cdtype)  # (m, g), exp(-i k x)
    inv = fwd.conj().T.copy()  # (g, m), exp(+i k x)
    ops = {
        "fwd": fwd,
        "inv": inv,
        # real stacks so that the grid-sized contractions are single real GEMMs
        "fwd_t_stack": np.concatenate([fwd.real.T, fwd.imag.T], axis=1).astype(dtype),  # (g, 2m)
        "inv_t_stack": np.concatenate([inv.real.T, -inv.imag.T], axis=0).astype(dtype),  # (2m, g)
        "inv_stack": np.concatenate([inv.real, inv.imag], axis=1).astype(dtype),  # (g, 2m)
        "fwd_stack": np.concatenate([fwd.real, -fwd.imag], axis=0).astype(dtype),  # (2m, g)
    }
    for v in ops.values():
        v.flags.writeable = False
    return ops


def _split(t: np.ndarray, m: int) -> np.ndarray:
    return t[..., :m] + 1j * t[..., m:]


def _stack(c: np.ndarray) -> np.ndarray:
    return np.concatenate([c.real, c.imag], axis=-1)


def spectral_forward(v: np.ndarray, weights_mm: np.ndarray, ops: dict, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (real spatial output, complex mode block of the input)."""
    b, c, g, _ = v.shape
    block = ops["fwd"] @ _split(v @ ops["fwd_t_stack"], m)  # (b, c, m, m)
    # batched matmuls are much faster on contiguous operands than on transposed views
    modes = np.ascontiguousarray(block.reshape(b, c, m * m).transpose(2, 0, 1)) @ weights_mm  # (mm, b, o)
    y = np.ascontiguousarray(modes.transpose(1, 2, 0)).reshape(b, -1, m, m)
    half = ops["inv"] @ y  # (b, o, g, m)
    return (_stack(half) @ ops["inv_t_stack"]) / (g * g), block


def spectral_backward(grad_out: np.ndarray, block: np.ndarray, weights_mm: np.ndarray, ops: dict, m: int):
    """Adjoint of :func:`spectral_forward`; returns (grad input, grad weights as (mm, i, o))."""
    b, o, g, _ = grad_out.shape
    gy = ops["inv"].T @ _split(grad_out @ ops["inv_stack"], m) / (g * g)  # (b, o, m, m)
    gy_mm = np.ascontiguousarray(gy.reshape(b, o, m * m).transpose(2, 0, 1))  # (mm, b, o)
    x_mm = np.ascontiguousarray(block.reshape(b, -1, m * m).transpose(2, 0, 1))  # (mm, b, i)
    grad_w = np.conj(x_mm.transpose(0, 2, 1) @ gy_mm)  # (mm, i, o)
    h = gy_mm @ np.ascontiguousarray(weights_mm.transpose(0, 2, 1))  # (mm, b, i)
    h = np.ascontiguousarray(h.transpose(1, 2, 0)).reshape(b, -1, m, m)
    p = ops["fwd"].T @ h  # (b, i, g, m) = F^T h
    return _stack(p) @ ops["fwd_stack"], grad_w


def _pointwise(weight: np.ndarray, bias: np.ndarray | None, x: np.ndarray) -> np.ndarray:
    b, c, g, _ = x.shape
    out = (weight @ x.reshape(b, c, g * g)).reshape(b, -1, g, g)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def _weight_grad(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tensordot(dy, x, axes=([0, 2, 3], [0, 2, 3]))


def forward(model: IfnoModel, inputs: np.ndarray, activation=GELU, return_cache: bool = True):
    """Evaluate the operator on ``inputs`` of shape ``(batch, in_channels, G, G)``."""
    cfg, p = model.config, model.params
    dtype = model.dtype
    a = np.asarray(inputs, dtype=dtype)
    if a.ndim != 4 or a.shape[1] != cfg.in_channels or a.shape[2] != a.shape[3]:
        raise ValueError(f"expected inputs (B, {cfg.in_channels}, G, G), got {a.shape}")
    g = a.shape[-1]
    if g < cfg.modes:
        raise ValueError(f"grid {g} smaller than modes {cfg.modes}")
    if not np.all(np.isfinite(a)):
        raise ValueError("inputs contain non-finite values")
    act, _ = activation
    m, depth = cfg.modes, cfg.depth
    ops = _dft(g, m, dtype.name)
    w_mm = p["layer.spectral"].transpose(2, 3, 0, 1).reshape(m * m, cfg.width, cfg.width)

    v = _pointwise(p["lift.weight"], p["lift.bias"], a)
    vs, blocks, hs = [], [], []
    for _ in range(depth):
        spec, block = spectral_forward(v, w_mm, ops, m)
        h = _pointwise(p["layer.weight"], p["layer.bias"], v) + spec
        if return_cache:
            vs.append(v)
            blocks.append(block)
            hs.append(h)
        v = v + act(h) / dtype.type(depth)
    q = _pointwise(p["proj1.weight"], p["proj1.bias"], v)
    r = act(q)
    out = _pointwise(p["proj2.weight"], p["proj2.bias"], r)
    if not return_cache:
        return out
    cache = {"a": a, "vs": vs, "blocks": blocks, "hs": hs, "v_last": v, "q": q, "r": r,
             "depth": depth, "grid": g, "activation": activation}
    return out, cache


def backward(model: IfnoModel, cache: dict, grad_out: np.ndarray):
    """Gradients of a scalar loss given ``d loss / d output``.

    Returns ``(param_grads, input_grads)``; complex parameters get the
    conjugate-packed gradient ``dL/dRe + i dL/dIm``.
    """
    cfg, p = model.config, model.params
    if cache["depth"] != cfg.depth or len(cache["vs"]) != cfg.depth:
        raise ValueError("cache was produced by a model of different depth")
    dtype = model.dtype
    go = np.asarray(grad_out, dtype=dtype)
    if go.shape != (cache["a"].shape[0], cfg.out_channels, cache["grid"], cache["grid"]):
        raise ValueError(f"grad_out shape {go.shape} does not match the cached forward")
    _, dact = cache["activation"]
    m, depth, g = cfg.modes, cfg.depth, cache["grid"]
    ops = _dft(g, m, dtype.name)
    w_mm = p["layer.spectral"].transpose(2, 3, 0, 1).reshape(m * m, cfg.width, cfg.width)
    grads = {}

    grads["proj2.weight"] = _weight_grad(go, cache["r"])
    grads["proj2.bias"] = go.sum(axis=(0, 2, 3))
    dq = _pointwise(p["proj2.weight"].T, None, go) * dact(cache["q"])
    grads["proj1.weight"] = _weight_grad(dq, cache["v_last"])
    grads["proj1.bias"] = dq.sum(axis=(0, 2, 3))
    dv = _pointwise(p["proj1.weight"].T, None, dq)

    gw = np.zeros_like(p["layer.weight"])
    gc = np.zeros_like(p["layer.bias"])
    gspec = np.zeros(w_mm.shape, dtype=w_mm.dtype)
    for v, block, h in zip(reversed(cache["vs"]), reversed(cache["blocks"]), reversed(cache["hs"])):
        dh = dv * dact(h) / dtype.type(depth)
        gw += _weight_grad(dh, v)
        gc += dh.sum(axis=(0, 2, 3))
        dspec, gwm = spectral_backward(dh, block, w_mm, ops, m)
        gspec += gwm
        dv = dv + _pointwise(p["layer.weight"].T, None, dh) + dspec
    grads["layer.weight"] = gw
    grads["layer.bias"] = gc
    grads["layer.spectral"] = gspec.reshape(m, m, cfg.width, cfg.width).transpose(2, 3, 0, 1)
    grads["lift.weight"] = _weight_grad(dv, cache["a"])
    grads["lift.bias"] = dv.sum(axis=(0, 2, 3))
    da = _pointwise(p["lift.weight"].T, None, dv)
    return grads, da


def predict(model: IfnoModel, inputs: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Batched forward without caching; returns ``(B, out_channels, G, G)``."""
    outs = [forward(model, inputs[i:i + batch_size], return_cache=False)
            for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs, axis=0)
