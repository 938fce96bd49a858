"""Small neural-network primitives with hand-written backward passes.

Everything is float64 numpy. Inputs are row-batched: a linear layer maps
``x`` of shape (..., in) to (..., out) with weights stored as (out, in).
Parameters live in flat ``dict[str, np.ndarray]`` containers so optimizers and
checkpoints can treat every network the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "marlqas-params-v1"


class TrainingError(RuntimeError):
    """Non-finite values reached the optimizer."""


def init_linear(rng: np.random.Generator, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out)


def linear_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W.T + b


def linear_backward(x: np.ndarray, W: np.ndarray, gy: np.ndarray):
    """Returns (dW, db, dx) for upstream gradient ``gy``."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = gy.reshape(-1, gy.shape[-1])
    return g2.T @ x2, g2.sum(axis=0), gy @ W


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return gy * (x > 0)


def abs_act(x: np.ndarray) -> np.ndarray:
    return np.abs(x)


def abs_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return gy * np.sign(x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


GRU_KEYS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def init_gru(rng: np.random.Generator, n_in: int, n_hidden: int, prefix: str = "") -> dict[str, np.ndarray]:
    p = {}
    for gate in "zrh":
        p[f"{prefix}W_{gate}"], p[f"{prefix}b_{gate}"] = init_linear(rng, n_in, n_hidden)
        p[f"{prefix}U_{gate}"], _ = init_linear(rng, n_hidden, n_hidden)
    return p


@dataclass
class GruCache:
    x: np.ndarray
    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hc: np.ndarray


def gru_forward(x: np.ndarray, h: np.ndarray, p: dict[str, np.ndarray], prefix: str = ""):
    """One GRU step. Returns (h_new, cache)."""
    P = {k: p[prefix + k] for k in GRU_KEYS}
    z = sigmoid(x @ P["W_z"].T + h @ P["U_z"].T + P["b_z"])
    r = sigmoid(x @ P["W_r"].T + h @ P["U_r"].T + P["b_r"])
    hc = np.tanh(x @ P["W_h"].T + (r * h) @ P["U_h"].T + P["b_h"])
    h_new = (1.0 - z) * h + z * hc
    return h_new, GruCache(x, h, z, r, hc)


def gru_backward(cache: GruCache, g_hnew: np.ndarray, p: dict[str, np.ndarray], prefix: str = ""):
    """Backward through one GRU step.

    Returns (grads keyed like ``p``, dx, dh_prev).
    """
    x, h, z, r, hc = cache.x, cache.h, cache.z, cache.r, cache.hc
    P = {k: p[prefix + k] for k in GRU_KEYS}
    dz = g_hnew * (hc - h) * z * (1 - z)
    dhc_pre = g_hnew * z * (1 - hc * hc)
    dh = g_hnew * (1 - z)
    d_rh = dhc_pre @ P["U_h"]
    dr = d_rh * h * r * (1 - r)
    dh += d_rh * r + dz @ P["U_z"] + dr @ P["U_r"]
    dx = dz @ P["W_z"] + dr @ P["W_r"] + dhc_pre @ P["W_h"]

    def outer(g, a):
        return g.reshape(-1, g.shape[-1]).T @ a.reshape(-1, a.shape[-1])

    grads = {
        "W_z": outer(dz, x), "U_z": outer(dz, h), "b_z": dz.reshape(-1, dz.shape[-1]).sum(0),
        "W_r": outer(dr, x), "U_r": outer(dr, h), "b_r": dr.reshape(-1, dr.shape[-1]).sum(0),
        "W_h": outer(dhc_pre, x), "U_h": outer(dhc_pre, r * h),
        "b_h": dhc_pre.reshape(-1, dhc_pre.shape[-1]).sum(0),
    }
    return {prefix + k: v for k, v in grads.items()}, dx, dh


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], st: AdamState) -> None:
    """Bias-corrected ADAM update, applied to ``params`` in place."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {k}")
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {k} {params[k].shape}")
    st.step_count += 1
    c1 = 1.0 - st.beta1 ** st.step_count
    c2 = 1.0 - st.beta2 ** st.step_count
    for k, g in grads.items():
        m = st.first_moment.get(k)
        v = st.second_moment.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = st.beta1 * m + (1 - st.beta1) * g
        v = st.beta2 * v + (1 - st.beta2) * g * g
        st.first_moment[k], st.second_moment[k] = m, v
        params[k] -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def save_params(path: Path, params: dict[str, np.ndarray], **meta) -> None:
    """JSON checkpoint: {"format", "meta", "params": {name: {"shape", "data"}}}."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path: Path) -> dict[str, np.ndarray]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    return {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()}
