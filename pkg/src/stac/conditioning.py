"""Signals and hypernetwork-generated MLP parameters.

A `ConditionedNet` owns no target weights of its own. For every signal its
`HyperNet` emits each layer's weight matrix through an independent linear map
of the signal encoding, and all biases through a small MLP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stac.nn import autodiff as ad
from stac.nn.autodiff import Node, Parameter
from stac.nn.mlp import MlpParams, forward_mlp, mlp_graph


class UnknownSignal(ValueError):
    pass


class AllActionsMasked(ValueError):
    pass


@dataclass
class SignalScheme:
    """Uniform signaler over `n_signals` one-hot encoded signals."""

    n_signals: int
    distribution: np.ndarray = field(init=False)
    encodings: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n_signals < 1:
            raise ValueError("need at least one signal")
        self.distribution = np.full(self.n_signals, 1.0 / self.n_signals)
        self.encodings = np.eye(self.n_signals, dtype=ad.DTYPE)
        self.encodings.setflags(write=False)

    @property
    def encoding_size(self) -> int:
        return self.encodings.shape[1]

    def draw(self, rng: np.random.Generator) -> int:
        if self.n_signals == 1:
            return 0
        return int(rng.integers(self.n_signals))


def draw_signal(scheme: SignalScheme, rng: np.random.Generator) -> int:
    return scheme.draw(rng)


class HyperNet:
    def __init__(self, target_sizes: list[int], encoding_size: int, rng: np.random.Generator,
                 bias_hidden: int = 16, out_scale: float = 1.0):
        self.target_sizes = list(target_sizes)
        self.encoding_size = encoding_size
        self.shapes = [(o, i) for i, o in zip(target_sizes[:-1], target_sizes[1:])]
        self.weight_gens: list[Parameter] = []
        for k, (o, i) in enumerate(self.shapes):
            bound = 1.0 / np.sqrt(i)
            if k == len(self.shapes) - 1:
                bound *= out_scale
            self.weight_gens.append(Parameter(rng.uniform(-bound, bound, (encoding_size, o * i)),
                                              name=f"wgen{k}"))
        self.n_bias = sum(o for o, _ in self.shapes)
        bound = 1.0 / np.sqrt(encoding_size)
        self.bias_mlp = [
            (Parameter(rng.uniform(-bound, bound, (bias_hidden, encoding_size)), name="bgen_w0"),
             Parameter(rng.uniform(-bound, bound, bias_hidden), name="bgen_b0")),
            (Parameter(np.zeros((self.n_bias, bias_hidden)), name="bgen_w1"),
             Parameter(np.zeros(self.n_bias), name="bgen_b1")),
        ]

    def parameters(self) -> list[Parameter]:
        return self.weight_gens + [p for layer in self.bias_mlp for p in layer]

    def generate(self, enc: np.ndarray) -> MlpParams:
        enc = np.asarray(enc)
        layers = []
        biases = forward_mlp(MlpParams([(w.value, b.value) for w, b in self.bias_mlp]), enc)
        off = 0
        for g, (o, i) in zip(self.weight_gens, self.shapes):
            layers.append(((enc @ g.value).reshape(o, i), biases[off:off + o]))
            off += o
        return MlpParams(layers)

    def generate_graph(self, enc) -> list[tuple[Node, Node]]:
        # a Node is taken as a (1, encoding_size) row so encodings can be learned
        e = enc if isinstance(enc, Node) else ad.as_node(np.asarray(enc)[None, :])
        biases = mlp_graph(self.bias_mlp, e)
        layers = []
        off = 0
        for g, (o, i) in zip(self.weight_gens, self.shapes):
            w = ad.reshape(ad.matmul(e, g), (o, i))
            b = ad.reshape(ad.index_rows(ad.reshape(biases, (self.n_bias,)),
                                         np.arange(off, off + o)), (o,))
            layers.append((w, b))
            off += o
        return layers


class ConditionedNet:
    """Target MLP whose parameters are generated per signal by a `HyperNet`.

    Signal encodings are the scheme's fixed one-hots unless `learn_encodings`
    is set, in which case each net trains its own copy.
    """

    def __init__(self, sizes: list[int], scheme: SignalScheme, rng: np.random.Generator,
                 bias_hidden: int = 16, out_scale: float = 1.0, learn_encodings: bool = False):
        self.sizes = list(sizes)
        self.scheme = scheme
        self.hyper = HyperNet(sizes, scheme.encoding_size, rng, bias_hidden, out_scale)
        self.encodings = Parameter(scheme.encodings.copy(), name="encodings") if learn_encodings else None
        self._cache: dict[int, MlpParams] = {}

    def parameters(self) -> list[Parameter]:
        extra = [self.encodings] if self.encodings is not None else []
        return self.hyper.parameters() + extra

    def _encoding(self, signal: int):
        if self.encodings is None:
            return self.scheme.encodings[signal]
        return self.encodings.value[signal]

    def _encoding_graph(self, signal: int):
        if self.encodings is None:
            return self.scheme.encodings[signal]
        return ad.index_rows(self.encodings, np.array([signal]))

    def arrays(self) -> list[np.ndarray]:
        return [p.value for p in self.parameters()]

    def named_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{p.name}": p.value for p in self.parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        for p in self.parameters():
            src = arrays[f"{prefix}.{p.name}"]
            if src.shape != p.value.shape:
                raise ad.ShapeMismatch(f"{prefix}.{p.name}: {src.shape} vs {p.value.shape}")
            p.value[...] = src
        self.invalidate()

    def invalidate(self) -> None:
        self._cache.clear()

    def _check(self, signal: int) -> None:
        if not 0 <= signal < self.scheme.n_signals:
            raise UnknownSignal(f"signal {signal} not in [0, {self.scheme.n_signals})")

    def generate_params(self, signal: int) -> MlpParams:
        self._check(signal)
        p = self._cache.get(signal)
        if p is None:
            p = self.hyper.generate(self._encoding(signal))
            self._cache[signal] = p
        return p

    def forward(self, signal: int, x: np.ndarray) -> np.ndarray:
        return forward_mlp(self.generate_params(signal), x)

    def forward_batch(self, signals: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Numpy forward for rows carrying their own signal; no graph is built."""
        signals = np.asarray(signals)
        present = np.unique(signals)
        if len(present) == 1:
            return self.forward(int(present[0]), x)
        out = None
        for s in present:
            idx = np.flatnonzero(signals == s)
            y = self.forward(int(s), x[idx])
            if out is None:
                out = np.empty((len(signals), y.shape[1]), dtype=y.dtype)
            out[idx] = y
        return out

    def forward_graph(self, signals: np.ndarray, x: np.ndarray) -> Node:
        """Differentiable batch forward; rows are grouped by signal internally."""
        signals = np.asarray(signals)
        present = np.unique(signals)
        for s in present:
            self._check(int(s))
        if len(present) == 1:
            layers = self.hyper.generate_graph(self._encoding_graph(int(present[0])))
            return mlp_graph(layers, x)
        outs, order = [], []
        for s in present:
            idx = np.flatnonzero(signals == s)
            layers = self.hyper.generate_graph(self._encoding_graph(int(s)))
            outs.append(mlp_graph(layers, x[idx]))
            order.append(idx)
        inv = np.empty(len(signals), dtype=int)
        inv[np.concatenate(order)] = np.arange(len(signals))
        return ad.index_rows(ad.concat(outs, axis=0), inv)


def masked_softmax(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise AllActionsMasked("every action slot is masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def conditioned_policy(net: ConditionedNet, signal: int, obs: np.ndarray,
                       mask: np.ndarray | None = None) -> np.ndarray:
    """Action distribution with illegal slots at probability 0."""
    return masked_softmax(net.forward(signal, obs), mask)
