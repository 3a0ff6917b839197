"""Bidirectional LSTM position regressor, implemented from scratch on numpy.

Architecture: two bidirectional LSTM layers (hidden width 7x the input
feature count per direction, so each layer emits a 14x-wide concatenation),
a dense layer of 14x units with LeakyReLU (slope 0.01), and a linear output
layer of 2 units producing (x, y) per timestep.

Training minimizes mean squared position error with Adam.  The backward
pass is full BPTT; gradients are exact and are checked against central
finite differences in the test suite.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_MAGIC = b"TWV1"
LEAKY_SLOPE = 0.01


class TrainingDivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z still yields the correct limit 0.0.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


@dataclass
class BilstmModel:
    f_input: int
    hidden: int
    params: dict[str, np.ndarray]
    rng_seed: int = 0

    @classmethod
    def create(cls, f_input: int, seed: int = 0) -> "BilstmModel":
        hidden = 7 * f_input
        wide = 2 * hidden  # 14 * f_input
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}

        def lstm(prefix: str, in_dim: int) -> None:
            k = 1.0 / np.sqrt(hidden)
            params[f"{prefix}.Wx"] = rng.uniform(-k, k, size=(4 * hidden, in_dim))
            params[f"{prefix}.Wh"] = rng.uniform(-k, k, size=(4 * hidden, hidden))
            params[f"{prefix}.b"] = np.zeros(4 * hidden)

        for d in ("f", "b"):
            lstm(f"l1{d}", f_input)
        for d in ("f", "b"):
            lstm(f"l2{d}", wide)
        k1 = np.sqrt(6.0 / (wide + wide))
        params["d1.W"] = rng.uniform(-k1, k1, size=(wide, wide))
        params["d1.b"] = np.zeros(wide)
        k2 = np.sqrt(6.0 / (wide + 2))
        params["d2.W"] = rng.uniform(-k2, k2, size=(2, wide))
        params["d2.b"] = np.zeros(2)
        return cls(f_input=f_input, hidden=hidden, params=params, rng_seed=seed)

    def copy(self) -> "BilstmModel":
        return BilstmModel(self.f_input, self.hidden,
                           {k: v.copy() for k, v in self.params.items()},
                           self.rng_seed)


def _direction_forward(x: np.ndarray, Wx: np.ndarray, Wh: np.ndarray,
                       b: np.ndarray, reverse: bool, xw=None,
                       need_cache: bool = True):
    """One LSTM direction over (B, T, in).  Gate layout is [i, f, o, g] so a
    single sigmoid covers the first three blocks."""
    B, T, _ = x.shape
    H = Wh.shape[1]
    H3 = 3 * H
    if xw is None:
        xw = (x.reshape(B * T, -1) @ Wx.T).reshape(B, T, 4 * H)
    xw = xw + b
    hs = np.empty((B, T, H))
    if need_cache:
        gates = np.empty((B, T, 4 * H))
        tcs = np.empty((B, T, H))
        hprev = np.empty((B, T, H))
        cprev = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    WhT = Wh.T
    times = range(T - 1, -1, -1) if reverse else range(T)
    for t in times:
        z = xw[:, t] + h @ WhT
        sig = _sigmoid(z[:, :H3])
        g = np.tanh(z[:, H3:])
        if need_cache:
            hprev[:, t] = h
            cprev[:, t] = c
        c = sig[:, :H] * g + sig[:, H:2 * H] * c
        tc = np.tanh(c)
        h = sig[:, 2 * H:] * tc
        if need_cache:
            gates[:, t, :H3] = sig
            gates[:, t, H3:] = g
            tcs[:, t] = tc
        hs[:, t] = h
    if not need_cache:
        return hs, None
    return hs, (gates, tcs, hprev, cprev, times)


def _direction_backward(dh_out: np.ndarray, cache, x: np.ndarray,
                        Wx: np.ndarray, Wh: np.ndarray):
    gates, tcs, hprev, cprev, times = cache
    B, T, H4 = gates.shape
    H = H4 // 4
    H2, H3 = 2 * H, 3 * H
    dz_all = np.empty((B, T, H4))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(times):
        i = gates[:, t, :H]
        f = gates[:, t, H:H2]
        o = gates[:, t, H2:H3]
        g = gates[:, t, H3:]
        tc = tcs[:, t]
        dh = dh_out[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:H2] = dc * cprev[:, t] * f * (1.0 - f)
        dz[:, H2:H3] = do * o * (1.0 - o)
        dz[:, H3:] = dc * i * (1.0 - g * g)
        dh_next = dz @ Wh
        dc_next = dc * f
    flat_dz = dz_all.reshape(B * T, H4)
    dWx = flat_dz.T @ x.reshape(B * T, -1)
    dWh = flat_dz.T @ hprev.reshape(B * T, H)
    db = flat_dz.sum(axis=0)
    dx = (flat_dz @ Wx).reshape(x.shape)
    return dx, dWx, dWh, db


def _bilstm_layer_forward(x: np.ndarray, params: dict, prefix: str,
                          need_cache: bool = True):
    B, T, _ = x.shape
    Wx_f = params[f"{prefix}f.Wx"]
    Wx_b = params[f"{prefix}b.Wx"]
    # One fused input projection for both directions.
    xw = x.reshape(B * T, -1) @ np.concatenate([Wx_f, Wx_b], axis=0).T
    n = Wx_f.shape[0]
    hf, cache_f = _direction_forward(
        x, Wx_f, params[f"{prefix}f.Wh"], params[f"{prefix}f.b"],
        reverse=False, xw=xw[:, :n].reshape(B, T, n), need_cache=need_cache)
    hb, cache_b = _direction_forward(
        x, Wx_b, params[f"{prefix}b.Wh"], params[f"{prefix}b.b"],
        reverse=True, xw=xw[:, n:].reshape(B, T, n), need_cache=need_cache)
    return np.concatenate([hf, hb], axis=2), (cache_f, cache_b, x)


def _bilstm_layer_backward(dy: np.ndarray, caches, params: dict, prefix: str,
                           grads: dict):
    cache_f, cache_b, x = caches
    H = params[f"{prefix}f.Wh"].shape[1]
    dx_f, dWx_f, dWh_f, db_f = _direction_backward(
        dy[:, :, :H], cache_f, x, params[f"{prefix}f.Wx"], params[f"{prefix}f.Wh"])
    dx_b, dWx_b, dWh_b, db_b = _direction_backward(
        dy[:, :, H:], cache_b, x, params[f"{prefix}b.Wx"], params[f"{prefix}b.Wh"])
    grads[f"{prefix}f.Wx"] = dWx_f
    grads[f"{prefix}f.Wh"] = dWh_f
    grads[f"{prefix}f.b"] = db_f
    grads[f"{prefix}b.Wx"] = dWx_b
    grads[f"{prefix}b.Wh"] = dWh_b
    grads[f"{prefix}b.b"] = db_b
    return dx_f + dx_b


def _forward_full(model: BilstmModel, x: np.ndarray, need_cache: bool = True):
    p = model.params
    y1, cache1 = _bilstm_layer_forward(x, p, "l1", need_cache=need_cache)
    y2, cache2 = _bilstm_layer_forward(y1, p, "l2", need_cache=need_cache)
    B, T, wide = y2.shape
    flat = y2.reshape(B * T, wide)
    a1 = flat @ p["d1.W"].T + p["d1.b"]
    r1 = np.where(a1 >= 0, a1, LEAKY_SLOPE * a1)
    out = r1 @ p["d2.W"].T + p["d2.b"]
    return out.reshape(B, T, 2), (cache1, cache2, flat, a1, r1)


def forward(model: BilstmModel, frames: np.ndarray) -> np.ndarray:
    """Predict one (x, y) per timestep.

    Accepts a single sequence (T, F) or a batch (B, T, F); the output mirrors
    the input's leading shape.
    """
    x = np.asarray(frames, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[2] != model.f_input:
        raise ValueError(f"expected (..., T, {model.f_input}) input, got {x.shape}")
    out, _ = _forward_full(model, x)
    return out[0] if single else out


def mse_loss(model: BilstmModel, x: np.ndarray, y: np.ndarray) -> float:
    """Forward-only mean squared position error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[None], y[None]
    out, _ = _forward_full(model, x, need_cache=False)
    diff = out - y
    return float((diff * diff).sum() / diff.size)


def mse_loss_and_grads(model: BilstmModel, x: np.ndarray, y: np.ndarray):
    """Mean squared position error and exact gradients for every tensor.

    Overflow is allowed to propagate as inf/nan; the trainer detects a
    non-finite loss and raises TrainingDivergenceError.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[None], y[None]
    with np.errstate(over="ignore", invalid="ignore"):
        out, (cache1, cache2, flat, a1, r1) = _forward_full(model, x)
        diff = out - y
        n = diff.size
        loss = float((diff * diff).sum() / n)

        p = model.params
        grads: dict[str, np.ndarray] = {}
        dout = (2.0 * diff / n).reshape(-1, 2)
        grads["d2.W"] = dout.T @ r1
        grads["d2.b"] = dout.sum(axis=0)
        dr1 = dout @ p["d2.W"]
        da1 = dr1 * np.where(a1 >= 0, 1.0, LEAKY_SLOPE)
        grads["d1.W"] = da1.T @ flat
        grads["d1.b"] = da1.sum(axis=0)
        dflat = da1 @ p["d1.W"]
        dy2 = dflat.reshape(x.shape[0], x.shape[1], -1)
        dy1 = _bilstm_layer_backward(dy2, cache2, p, "l2", grads)
        _bilstm_layer_backward(dy1, cache1, p, "l1", grads)
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: BilstmModel) -> "AdamState":
        return cls(m={k: np.zeros_like(v) for k, v in model.params.items()},
                   v={k: np.zeros_like(v) for k, v in model.params.items()})


def adam_step(model: BilstmModel, grads: dict, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    state.t += 1
    b1t = 1.0 - beta1 ** state.t
    b2t = 1.0 - beta2 ** state.t
    for name, param in model.params.items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = state.m[name] / b1t
        v_hat = state.v[name] / b2t
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(model: BilstmModel, x: np.ndarray, y: np.ndarray, epochs: int = 50,
          lr: float = 1e-3, batch_size: int = 64, seed: int = 0,
          log=None) -> list[float]:
    """Train in place on sequences x (N, T, F) against positions y (N, T, 2).

    Returns the per-epoch mean loss curve.  Deterministic for a given seed:
    shuffling, batching and summation order are all fixed.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("no training trajectories")
    rng = np.random.default_rng(seed)
    state = AdamState.for_model(model)
    losses: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        batches = 0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = mse_loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch)
            adam_step(model, grads, state, lr=lr)
            total += loss
            batches += 1
        losses.append(total / batches)
        if log is not None:
            log(epoch, losses[-1])
    return losses


def save_checkpoint(model: BilstmModel, path: str | Path,
                    columns: Sequence[str]) -> None:
    """Versioned binary container: magic, JSON header, then little-endian
    f64 tensor payloads in header order."""
    names = sorted(model.params)
    header = {
        "f_input": model.f_input,
        "hidden": model.hidden,
        "rng_seed": model.rng_seed,
        "columns": list(columns),
        "tensors": [{"name": n, "shape": list(model.params[n].shape)}
                    for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[BilstmModel, list[str]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    offset = 8 + hlen
    params: dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        params[spec["name"]] = arr.reshape(shape).astype(np.float64)
        offset += count * 8
    model = BilstmModel(f_input=header["f_input"], hidden=header["hidden"],
                        params=params, rng_seed=header.get("rng_seed", 0))
    return model, list(header["columns"])
