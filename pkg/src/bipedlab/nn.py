"""Minimal feedforward substrate: MLPs with ELU hidden units, reverse-mode
gradients and Adam.

Everything is plain float64 numpy.  Gradients are hand-derived and pinned by
finite-difference tests; there is no autodiff framework underneath, which
keeps checkpoints portable and the update rule auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0.0, z, np.expm1(z))


def elu_prime(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, np.exp(z))


def elu_second(z: np.ndarray) -> np.ndarray:
    # Second derivative; discontinuous at 0 (0 vs 1), measure-zero set.
    return np.where(z >= 0.0, 0.0, np.exp(z))


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Fully connected net: ELU on hidden layers, linear output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None,
                 final_gain: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        rng = rng or np.random.default_rng(0)
        for k in range(len(self.sizes) - 1):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            gain = final_gain if k == len(self.sizes) - 2 else np.sqrt(2.0)
            self.W.append(orthogonal(rng, fan_out, fan_in, gain))
            self.b.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def params(self) -> list[np.ndarray]:
        return self.W + self.b

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cache(x)
        return y

    def forward_cache(self, x: np.ndarray):
        """Returns (output, cache); accepts (in,) or (batch, in)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        z = x[None, :] if squeeze else x
        if z.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {z.shape[1]} != {self.sizes[0]}")
        acts = [z]
        pre = []
        for k in range(self.n_layers):
            a = acts[-1] @ self.W[k].T + self.b[k]
            pre.append(a)
            if k < self.n_layers - 1:
                acts.append(elu(a))
            else:
                acts.append(a)
        y = acts[-1]
        return (y[0] if squeeze else y), (acts, pre, squeeze)

    def backward(self, cache, upstream: np.ndarray):
        """Exact reverse-mode gradients of the forward map.

        upstream is dL/dy with the same leading shape as the cached batch.
        Returns (grads, dx) where grads aligns with params() (dW then db).
        """
        acts, pre, squeeze = cache
        g = np.asarray(upstream, dtype=float)
        if squeeze:
            g = g[None, :]
        dW = [np.zeros_like(w) for w in self.W]
        db = [np.zeros_like(b) for b in self.b]
        for k in range(self.n_layers - 1, -1, -1):
            if k < self.n_layers - 1:
                g = g * elu_prime(pre[k])
            dW[k] = g.T @ acts[k]
            db[k] = g.sum(axis=0)
            g = g @ self.W[k]
        dx = g[0] if squeeze else g
        return dW + db, dx

    def input_gradient(self, x: np.ndarray, out_index: int = 0) -> np.ndarray:
        """d(output[out_index])/dx for a single input; used by analysis code."""
        y, cache = self.forward_cache(x)
        up = np.zeros(self.sizes[-1])
        up[out_index] = 1.0
        _, dx = self.backward(cache, up)
        return dx

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.sizes = self.sizes
        dup.W = [w.copy() for w in self.W]
        dup.b = [b.copy() for b in self.b]
        return dup

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes),
                "W": [w.tolist() for w in self.W],
                "b": [b.tolist() for b in self.b]}

    @staticmethod
    def from_dict(d: dict) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.sizes = tuple(d["sizes"])
        net.W = [np.array(w, dtype=float) for w in d["W"]]
        net.b = [np.array(b, dtype=float) for b in d["b"]]
        return net


@dataclass
class AdamState:
    """First/second moment accumulators matching a parameter list."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @staticmethod
    def for_params(params, lr: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                         m=[np.zeros_like(p) for p in params],
                         v=[np.zeros_like(p) for p in params])

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "step": self.step,
                "m": [a.tolist() for a in self.m],
                "v": [a.tolist() for a in self.v]}

    @staticmethod
    def from_dict(d: dict) -> "AdamState":
        return AdamState(lr=d["lr"], beta1=d["beta1"], beta2=d["beta2"],
                         eps=d["eps"], step=d["step"],
                         m=[np.array(a) for a in d["m"]],
                         v=[np.array(a) for a in d["v"]])


def adam_step(params: list, grads: list, state: AdamState) -> None:
    """Standard bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.m):
        raise ValueError("parameter/state shape mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def global_grad_norm(grads: list) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


def clip_grads(grads: list, max_norm: float) -> list:
    """Global-norm gradient clipping (no-op when max_norm <= 0)."""
    if max_norm <= 0.0:
        return grads
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return [g * scale for g in grads]
    return grads
