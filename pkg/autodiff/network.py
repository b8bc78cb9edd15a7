"""
File that describes dense networks with reverse-mode gradients.

Only fully connected stacks are supported: ``h_{k+1} = act_k(h_k @ W_k + b_k)``.
Gradients are taken of the scalar ``<upstream, output>`` with respect to every
parameter and to the input, which is all the samplers and the trainer need.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from autodiff.tensors import ParamStore, as_tensor, resolve_dtype
from core.errors import ContractViolation, MissingTraceError

logger = logging.getLogger(__name__)


def _relu(pre: np.ndarray) -> np.ndarray:
    return np.maximum(pre, 0.0)


def _relu_grad(pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(pre.dtype)


def _tanh_grad(pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    return 1.0 - out * out


def _identity_grad(pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    return np.ones_like(pre)


# name -> (activation, derivative given pre-activation and activation)
ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "identity": (lambda pre: pre, _identity_grad),
}


@dataclass(frozen=True)
class LayerSpec:
    r"""
    Architecture of a dense network.

    :cvar sizes: (:class:`tuple`\[:class:`int`]) Layer widths from input to output, at least two entries.
    :cvar hidden_activation: (:class:`str`) Nonlinearity after every hidden layer.
    :cvar output_activation: (:class:`str`) Nonlinearity of the output head.
    """
    sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise ContractViolation(f"Layer sizes must be >= 2 positive integers, got {self.sizes}")
        for name in (self.hidden_activation, self.output_activation):
            if name not in ACTIVATIONS:
                raise ContractViolation(f"Unknown activation {name!r}")

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return len(self.sizes) - 1

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == self.depth - 1 else self.hidden_activation

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for k in range(self.depth):
            shapes.append((f"W{k}", (self.sizes[k], self.sizes[k + 1])))
            shapes.append((f"b{k}", (self.sizes[k + 1],)))
        return shapes


@dataclass
class _Trace:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


class DenseNet:
    """
    Fully connected network with a forward pass and reverse-mode gradients.

    ``forward`` records an evaluation trace; ``grad_params``/``grad_input`` replay it and
    raise :class:`MissingTraceError` when asked about an input that was not traced last.

    :param spec: (:class:`LayerSpec`) Architecture.
    :param params: (:class:`ParamStore`) Parameters with names ``W0, b0, W1, b1, ...``.
    """

    def __init__(self, spec: LayerSpec, params: ParamStore):
        expected = spec.param_shapes()
        if [(k, v.shape) for k, v in params.items()] != expected:
            raise ContractViolation(f"Parameters do not match spec {spec.sizes}")
        self.spec = spec
        self.params = params
        self._trace: _Trace | None = None

    @classmethod
    def initialize(cls, spec: LayerSpec, seed: int | np.random.Generator = 0,
                   precision: str = "float64") -> DenseNet:
        """
        Build a network with weights uniform in ``[-s, s]``, ``s = sqrt(1 / fan_in)``, and zero biases.

        :param spec: (:class:`LayerSpec`) Architecture.
        :param seed: Seed or generator for the weight draw.
        :param precision: (:class:`str`) ``float64`` or ``float32``.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        dtype = resolve_dtype(precision)
        entries = []
        for name, shape in spec.param_shapes():
            if name.startswith("W"):
                scale = np.sqrt(1.0 / shape[0])
                entries.append((name, rng.uniform(-scale, scale, size=shape).astype(dtype)))
            else:
                entries.append((name, np.zeros(shape, dtype=dtype)))
        return cls(spec, ParamStore(entries))

    @classmethod
    def zeros(cls, spec: LayerSpec, precision: str = "float64") -> DenseNet:
        dtype = resolve_dtype(precision)
        return cls(spec, ParamStore([(k, np.zeros(s, dtype=dtype)) for k, s in spec.param_shapes()]))

    @property
    def dtype(self) -> np.dtype:
        return self.params.dtype

    def _prepare(self, x) -> tuple[np.ndarray, bool]:
        array = as_tensor(x, self.dtype, "network input")
        single = array.ndim == 1
        if single:
            array = array[None, :]
        if array.ndim != 2 or array.shape[1] != self.spec.input_dim:
            raise ContractViolation(
                f"Input shape {np.shape(x)} does not match network input width {self.spec.input_dim}")
        return array, single

    def forward(self, x) -> np.ndarray:
        """
        Evaluate the network and record the trace used by the gradient calls.

        :param x: Input of shape ``(input_dim,)`` or ``(B, input_dim)``.
        :return: (:class:`numpy.ndarray`) Output of shape ``(output_dim,)`` or ``(B, output_dim)``.
        """
        h, single = self._prepare(x)
        trace = _Trace(inputs=h.copy())
        for k in range(self.spec.depth):
            pre = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            h = ACTIVATIONS[self.spec.activation(k)][0](pre)
            trace.pre.append(pre)
            trace.post.append(h)
        self._trace = trace
        return h[0] if single else h

    def backward(self, x, upstream) -> tuple[ParamStore, np.ndarray]:
        """
        Gradients of ``<upstream, forward(x)>`` with respect to the parameters and the input.

        Parameter gradients are summed over the batch; the input gradient keeps the shape of ``x``.

        :param x: The input last passed to :meth:`forward`.
        :param upstream: Cotangent with the shape of the output.
        :return: (:class:`tuple`) ``(ParamStore, input gradient)``.
        """
        h, single = self._prepare(x)
        trace = self._trace
        if trace is None or trace.inputs.shape != h.shape or not np.array_equal(trace.inputs, h):
            raise MissingTraceError("No forward trace recorded for this input; call forward(x) first")
        g = np.asarray(upstream, dtype=self.dtype)
        if single:
            g = g[None, :] if g.ndim == 1 else g
        if g.shape != trace.post[-1].shape:
            raise ContractViolation(f"Upstream shape {np.shape(upstream)} does not match output shape")

        grads: dict[str, np.ndarray] = {}
        for k in reversed(range(self.spec.depth)):
            g = g * ACTIVATIONS[self.spec.activation(k)][1](trace.pre[k], trace.post[k])
            below = trace.post[k - 1] if k > 0 else trace.inputs
            grads[f"W{k}"] = below.T @ g
            grads[f"b{k}"] = g.sum(axis=0)
            g = g @ self.params[f"W{k}"].T
        ordered = ParamStore([(name, grads[name]) for name in self.params])
        return ordered, (g[0] if single else g)

    def grad_params(self, x, upstream) -> ParamStore:
        """Gradient of ``<upstream, output>`` with respect to every parameter."""
        return self.backward(x, upstream)[0]

    def grad_input(self, x, upstream) -> np.ndarray:
        """Gradient of ``<upstream, output>`` with respect to the input ``x``."""
        return self.backward(x, upstream)[1]

    def clone(self) -> DenseNet:
        return DenseNet(self.spec, self.params.copy())

    def __repr__(self):
        return f"DenseNet(sizes={self.spec.sizes}, hidden={self.spec.hidden_activation}, " \
               f"out={self.spec.output_activation})"
