from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stac.nn import autodiff as ad
from stac.nn.autodiff import Node, ShapeMismatch


@dataclass
class MlpParams:
    """Dense layers `(W, b)` with W of shape (out, in); ReLU between layers."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for (w, b), (w2, _) in zip(self.layers, self.layers[1:]):
            if w2.shape[1] != w.shape[0]:
                raise ShapeMismatch(f"layer widths do not chain: {w.shape} -> {w2.shape}")
        for w, b in self.layers:
            if b.shape != (w.shape[0],):
                raise ShapeMismatch(f"bias {b.shape} does not match weight {w.shape}")

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer]


def init_mlp(sizes: list[int], rng: np.random.Generator, out_scale: float = 1.0) -> MlpParams:
    """Uniform fan-in init, weights and biases in +-1/sqrt(fan_in).

    `out_scale` shrinks the final layer, which keeps fresh softmax heads near
    uniform.
    """
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        if i == len(sizes) - 2:
            bound *= out_scale
        w = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(ad.DTYPE)
        b = rng.uniform(-bound, bound, size=n_out).astype(ad.DTYPE)
        layers.append((w, b))
    return MlpParams(layers)


def forward_mlp(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass; `x` is (batch, in) or (in,)."""
    x = np.asarray(x)
    if x.shape[-1] != p.sizes[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != {p.sizes[0]}")
    h = x
    last = len(p.layers) - 1
    for i, (w, b) in enumerate(p.layers):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def mlp_graph(layers: list[tuple[Node, Node]], x) -> Node:
    """Differentiable forward pass over `(W, b)` nodes."""
    h = ad.as_node(x)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = ad.linear(h, w, b)
        if i < last:
            h = ad.relu(h)
    return h
