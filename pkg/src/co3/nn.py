"""Dense layers with hand-written backward passes, plus a finite-difference checker.

Tensors are plain float64 numpy arrays of shape (rows, cols).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("none", "relu")


class StaleCacheError(RuntimeError):
    """Backward was called with a cache from before the last parameter update."""


@dataclass(eq=False)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "none"
    grad_weight: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be (out, in) and bias (out,)")
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def glorot_layer(rng: np.random.Generator, n_in: int, n_out: int, activation: str) -> Layer:
    a = np.sqrt(6.0 / (n_in + n_out))
    return Layer(rng.uniform(-a, a, size=(n_out, n_in)), np.zeros(n_out), activation)


class MlpStack:
    """Affine layers with optional ReLU; ``forward`` returns a cache consumed by ``backward``."""

    def __init__(self, layers: list[Layer]):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)
        self._version = 0

    @classmethod
    def create(cls, dims: list[int], rng: np.random.Generator, final_activation: str = "none"):
        """Glorot-uniform stack with ReLU between layers, e.g. ``dims=[64, 256, 16]``."""
        n = len(dims) - 1
        layers = [
            glorot_layer(rng, dims[i], dims[i + 1], "relu" if i < n - 1 else final_activation)
            for i in range(n)
        ]
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.grad_weight, layer.grad_bias]
        return out

    def zero_grad(self) -> None:
        for g in self.gradients():
            g[...] = 0.0

    def mark_updated(self) -> None:
        """Invalidate outstanding caches after an in-place parameter change."""
        self._version += 1

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input (*, {self.in_dim}), got {x.shape}")
        acts = []
        h = x
        for layer in self.layers:
            z = h @ layer.weight.T + layer.bias
            acts.append((h, z))
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return h, (self._version, acts)

    def backward(self, cache, dy: np.ndarray) -> np.ndarray:
        version, acts = cache
        if version != self._version:
            raise StaleCacheError("cache predates the last parameter update")
        g = np.asarray(dy, dtype=np.float64)
        for layer, (h, z) in zip(reversed(self.layers), reversed(acts)):
            if layer.activation == "relu":
                g = g * (z > 0)
            layer.grad_weight += g.T @ h
            layer.grad_bias += g.sum(axis=0)
            g = g @ layer.weight
        return g

    def copy(self) -> "MlpStack":
        return MlpStack(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def equals(self, other: "MlpStack") -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.activation == b.activation
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )


def l2_normalize(x: np.ndarray, eps: float = 1e-12):
    """Scale rows to unit length; returns (y, backward) where backward maps dL/dy to dL/dx."""
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norm < eps):
        raise ValueError("cannot normalise a zero row (degenerate embedding)")
    y = x / norm

    def backward(dy: np.ndarray) -> np.ndarray:
        return (dy - y * np.sum(dy * y, axis=1, keepdims=True)) / norm

    return y, backward


def grad_check(loss_fn, params: list[np.ndarray], h: float = 1e-6, coords=None, rng=None) -> float:
    """Largest |analytic - central difference| / max(1, |analytic|) over the checked coordinates.

    ``loss_fn()`` must return ``(loss, grads)`` with ``grads`` aligned to
    ``params``; parameters are perturbed in place and restored. ``coords``
    is None (every coordinate), an int budget of randomly sampled
    coordinates per array, or a list giving flat indices per array.
    """
    _, analytic = loss_fn()
    analytic = [np.array(g, copy=True) for g in analytic]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for k, (p, g) in enumerate(zip(params, analytic)):
        flat = p.reshape(-1)
        if isinstance(coords, (list, tuple)):
            picks = coords[k]
        elif coords is None or coords >= flat.size:
            picks = range(flat.size)
        else:
            picks = rng.choice(flat.size, size=coords, replace=False)
        gflat = g.reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()[0]
            flat[i] = orig - h
            down = loss_fn()[0]
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            worst = max(worst, err)
    return worst
