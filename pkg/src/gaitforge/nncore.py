"""Small fully-connected networks with hand-written reverse mode.

Everything runs in float64. Parameters are ordered ``W0, b0, W1, b1, ...``
with ``W`` of shape (out, in); the flat view concatenates them row-major in
that order, which is also the checkpoint layout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


class Mlp:
    """tanh hidden layers, identity output."""

    def __init__(self, layer_sizes, seed: int = 0, out_scale: float = 1.0, hidden_gain: float = 1.0):
        self.layer_sizes = [int(s) for s in layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ShapeMismatch(f"invalid layer sizes {layer_sizes}")
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        n_layers = len(self.layer_sizes) - 1
        for i, (d_in, d_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            gain = out_scale if i == n_layers - 1 else hidden_gain
            self.weights.append(gain * _orthogonal(rng, d_out, d_in))
            self.biases.append(np.zeros(d_out))

    @property
    def d_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for W, b in zip(self.weights, self.biases) for a in (W, b)])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {flat.shape}")
        i = 0
        for k in range(len(self.weights)):
            for arr in (self.weights[k], self.biases[k]):
                arr[...] = flat[i:i + arr.size].reshape(arr.shape)
                i += arr.size

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_sizes = list(self.layer_sizes)
        other.seed = self.seed
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in or x.ndim > 2:
            raise ShapeMismatch(f"expected input of width {self.d_in}, got shape {x.shape}")
        return x

    def forward_cache(self, x):
        x = self._check_input(x)
        acts = [np.atleast_2d(x)]
        h = acts[0]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def forward(self, x) -> np.ndarray:
        x = self._check_input(x)
        out, _ = self.forward_cache(x)
        return out[0] if x.ndim == 1 else out

    def backward_cache(self, acts, upstream):
        """Parameter gradients (flat) and input gradient from a forward cache.

        ``upstream`` is dLoss/dOutput with the batch shape of the forward
        pass; per-sample gradients are summed over the batch.
        """
        g = np.atleast_2d(np.asarray(upstream, dtype=float))
        if g.shape != acts[-1].shape:
            raise ShapeMismatch(f"upstream gradient {g.shape} vs output {acts[-1].shape}")
        grads = []
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (1.0 - acts[k + 1] ** 2)
            grads.append((g.T @ acts[k], g.sum(axis=0)))
            g = g @ self.weights[k]
        grads.reverse()
        flat = np.concatenate([a.ravel() for pair in grads for a in pair])
        return flat, g

    def backward(self, x, upstream):
        """Exact gradients of ``sum(upstream * forward(x))``.

        Returns ``(param_grad_flat, input_grad)``.
        """
        x = self._check_input(x)
        _, acts = self.forward_cache(x)
        flat, gx = self.backward_cache(acts, np.reshape(upstream, acts[-1].shape))
        return flat, (gx[0] if x.ndim == 1 else gx)

    def jvp(self, x, v_flat) -> np.ndarray:
        """Directional derivative of the outputs along parameter direction ``v_flat``."""
        x = self._check_input(x)
        tmp = self.copy()
        tmp.set_flat(v_flat)
        h = np.atleast_2d(x)
        dh = np.zeros_like(h)
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            dz = h @ tmp.weights[k].T + dh @ W.T + tmp.biases[k]
            if k < last:
                h = np.tanh(z)
                dh = dz * (1.0 - h ** 2)
            else:
                h, dh = z, dz
        return dh[0] if x.ndim == 1 else dh

    def manifest(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "parameter_count": self.n_params,
            "seed": self.seed,
            "byte_order": "little-endian",
            "dtype": "f64",
            "activation": "tanh",
        }


def _orthogonal(rng, rows, cols):
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def save_mlp(net: Mlp, stem, extra: dict | None = None) -> None:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (raw little-endian f64)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    doc = net.manifest()
    if extra:
        doc.update(extra)
    doc["data_file"] = stem.name + ".bin"
    stem.with_suffix(".bin").write_bytes(net.get_flat().astype("<f8").tobytes())
    stem.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_mlp(stem) -> Mlp:
    stem = Path(stem)
    doc = json.loads(stem.with_suffix(".json").read_text())
    if doc.get("dtype") != "f64" or doc.get("byte_order") != "little-endian":
        raise ValueError(f"unsupported checkpoint encoding in {stem}")
    flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").astype(float)
    if flat.size != doc["parameter_count"]:
        raise ShapeMismatch(f"{stem}: expected {doc['parameter_count']} values, found {flat.size}")
    net = Mlp(doc["layer_sizes"], seed=doc.get("seed", 0))
    net.set_flat(flat)
    return net


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, state)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeMismatch("parameter, gradient and state shapes differ")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads ** 2
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), state


@dataclass(frozen=True)
class DiagGaussian:
    mean: np.ndarray
    log_std: np.ndarray = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        log_std = np.zeros_like(mean) if self.log_std is None else np.asarray(self.log_std, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", np.clip(np.broadcast_to(log_std, mean.shape),
                                                    LOG_STD_MIN, LOG_STD_MAX))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def gaussian_logprob(d: DiagGaussian, x) -> np.ndarray | float:
    """Log density summed over the last axis."""
    x = np.asarray(x, dtype=float)
    z = (x - d.mean) / d.std
    lp = -0.5 * np.sum(z ** 2 + 2.0 * d.log_std + LOG_2PI, axis=-1)
    return float(lp) if np.ndim(lp) == 0 else lp


def gaussian_sample(d: DiagGaussian, rng: np.random.Generator) -> np.ndarray:
    return d.mean + d.std * rng.standard_normal(d.mean.shape)


def kl_diag_gaussians(p: DiagGaussian, q: DiagGaussian) -> np.ndarray | float:
    """KL(p || q), summed over the last axis."""
    var_p = np.exp(2.0 * p.log_std)
    var_q = np.exp(2.0 * q.log_std)
    kl = 0.5 * np.sum((var_p + (p.mean - q.mean) ** 2) / var_q - 1.0
                      + 2.0 * (q.log_std - p.log_std), axis=-1)
    kl = np.maximum(kl, 0.0)
    return float(kl) if np.ndim(kl) == 0 else kl
