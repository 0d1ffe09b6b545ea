"""
Dense neural-network substrate.

A small numpy multilayer perceptron with tanh hidden layers and a linear
output, exact reverse-mode gradients, Adam, and a finite-difference
gradient check. Every network of the reward learner is built on it.

A forward call returns a cache that ``backward`` consumes. The cache
remembers the parameter version it was computed with; using it after the
parameters changed raises ``CacheUsageError``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from cfpp.errors import CacheUsageError, ShapeError


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LossFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class ForwardCache:
    """Activations of one forward pass, layer by layer."""

    net_id: int
    version: int
    activations: Tuple[np.ndarray, ...]
    single: bool


class MLP:
    """Multilayer perceptron: tanh hidden layers, identity output.

    Weights are stored as ``(fan_in, fan_out)`` matrices, so a batch of
    row vectors goes through as ``x @ W + b``.

    Example:
        >>> net = MLP([3, 64, 64, 1], seed=0)
        >>> y, cache = net.forward(np.zeros(3))
        >>> y.shape
        (1,)
    """

    def __init__(
        self,
        widths: Sequence[int],
        seed: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        """
        Initialize a network with Glorot-uniform weights and zero biases.

        Args:
            widths: Layer widths from input to output, at least two
            seed: Seed of the initializer (ignored when ``rng`` is given)
            rng: Generator to draw the initial weights from

        Raises:
            ShapeError: If fewer than two widths are given or one is < 1
        """
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ShapeError(f"invalid layer widths {widths}")
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.widths = widths
        self._params: List[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self._params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self._params.append(np.zeros(fan_out))
        self.version = 0

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def params(self) -> List[np.ndarray]:
        """Copies of ``[W0, b0, W1, b1, ...]``."""
        return [p.copy() for p in self._params]

    def _check_shapes(self, params: Sequence[np.ndarray]) -> List[np.ndarray]:
        if len(params) != len(self._params):
            raise ShapeError(f"expected {len(self._params)} parameter arrays, got {len(params)}")
        checked = []
        for k, (new, old) in enumerate(zip(params, self._params)):
            new = np.array(new, dtype=float)
            if new.shape != old.shape:
                raise ShapeError(f"parameter {k} has shape {new.shape}, expected {old.shape}")
            checked.append(new)
        return checked

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        """
        Replace every parameter and invalidate outstanding caches.

        Raises:
            ShapeError: If shapes differ from the current parameters
            ValueError: If a value is not finite
        """
        checked = self._check_shapes(params)
        if not all(np.all(np.isfinite(p)) for p in checked):
            raise ValueError("parameters must be finite")
        self._params = checked
        self.version += 1

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """
        Evaluate the network.

        Args:
            x: One input vector or a ``(batch, width)`` matrix

        Returns:
            Output with the same batching as ``x``, and the cache for
            ``backward``

        Raises:
            ShapeError: If the input width does not match the first layer
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.widths[0]:
            raise ShapeError(f"input shape {x.shape} does not match input width {self.widths[0]}")
        activations = [h]
        for layer in range(self.n_layers):
            W, b = self._params[2 * layer], self._params[2 * layer + 1]
            z = h @ W + b
            h = np.tanh(z) if layer < self.n_layers - 1 else z
            activations.append(h)
        cache = ForwardCache(
            net_id=id(self), version=self.version, activations=tuple(activations), single=single
        )
        return (h[0] if single else h), cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: ForwardCache, upstream: np.ndarray
    ) -> Tuple[List[np.ndarray], np.ndarray]:
        """
        Gradients of ``sum(output * upstream)`` by reverse accumulation.

        Args:
            cache: Cache of a forward call on this network, parameters unchanged
            upstream: Gradient with respect to the output, batched like it

        Returns:
            (parameter gradients in ``params`` order, input gradient)

        Raises:
            CacheUsageError: If the cache belongs to another network or to
                older parameters
            ShapeError: If ``upstream`` does not match the output
        """
        if cache.net_id != id(self) or cache.version != self.version:
            raise CacheUsageError(
                f"cache from version {cache.version} used with network version {self.version}"
            )
        g = np.asarray(upstream, dtype=float)
        if cache.single:
            g = g[None, :] if g.ndim == 1 else g
        out = cache.activations[-1]
        if g.shape != out.shape:
            raise ShapeError(f"upstream gradient shape {g.shape} does not match output {out.shape}")

        grads: List[np.ndarray] = [np.empty(0)] * len(self._params)
        for layer in reversed(range(self.n_layers)):
            if layer < self.n_layers - 1:
                g = g * (1.0 - cache.activations[layer + 1] ** 2)
            h_prev = cache.activations[layer]
            grads[2 * layer] = h_prev.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self._params[2 * layer].T
        return grads, (g[0] if cache.single else g)

    def copy(self) -> "MLP":
        clone = MLP.__new__(MLP)
        clone.widths = self.widths
        clone._params = self.params
        clone.version = 0
        return clone

    def to_dict(self) -> dict:
        """Layer widths plus row-major weights and biases as plain lists."""
        return {
            "widths": list(self.widths),
            "weights": [self._params[2 * k].ravel().tolist() for k in range(self.n_layers)],
            "biases": [self._params[2 * k + 1].tolist() for k in range(self.n_layers)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLP":
        """
        Rebuild a network from ``to_dict`` output.

        Raises:
            ShapeError: If the stored arrays do not match the stored widths
        """
        net = cls(data["widths"], seed=0)
        params = []
        for k, (fan_in, fan_out) in enumerate(zip(net.widths[:-1], net.widths[1:])):
            flat = np.array(data["weights"][k], dtype=float)
            if flat.size != fan_in * fan_out:
                raise ShapeError(f"layer {k} stores {flat.size} weights, expected {fan_in * fan_out}")
            params.append(flat.reshape(fan_in, fan_out))
            params.append(np.array(data["biases"][k], dtype=float))
        net.set_params(params)
        net.version = 0
        return net

    def save(self, path: PathLike) -> None:
        """Write a JSON checkpoint; floats are written losslessly."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: PathLike) -> "MLP":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters of Adam."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **hyper: float) -> "AdamState":
        return cls(
            m=[np.zeros_like(p, dtype=float) for p in params],
            v=[np.zeros_like(p, dtype=float) for p in params],
            **hyper,
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
) -> Tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update; inputs are left untouched.

    Returns:
        (new parameters, new state)

    Raises:
        ShapeError: If parameters, gradients and accumulators disagree in shape

    Example:
        >>> state = AdamState.zeros_like([np.zeros(1)], lr=0.1)
        >>> new, state = adam_step([np.zeros(1)], [np.array([5.0])], state)
        >>> round(float(new[0][0]), 6)
        -0.1
    """
    if not len(params) == len(grads) == len(state.m):
        raise ShapeError("parameters, gradients and optimizer state differ in count")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=float)
        if g.shape != np.shape(p) or m.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {np.shape(p)}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(
        m=new_m,
        v=new_v,
        step=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )


def linear_loss(weights: np.ndarray) -> LossFn:
    """Loss ``sum(weights * output)``; its output gradient is ``weights``."""
    weights = np.asarray(weights, dtype=float)
    return lambda y: (float(np.sum(weights * y)), weights.copy())


def quadratic_loss(target: np.ndarray) -> LossFn:
    """Loss ``0.5 * sum((output - target)^2)``."""
    target = np.asarray(target, dtype=float)
    return lambda y: (float(0.5 * np.sum((y - target) ** 2)), y - target)


def grad_check(
    net: MLP,
    x: np.ndarray,
    loss: LossFn,
    h: float = 1e-5,
    sample: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare backpropagation with central finite differences.

    Args:
        net: Network to check; its parameters are restored afterwards
        x: Input (vector or batch)
        loss: Maps the output to (scalar loss, gradient of loss wrt output)
        h: Finite-difference step
        sample: Check only this many randomly chosen entries per array
        seed: Seed of the entry sampler

    Returns:
        Worst relative error ``|a - n| / max(|a| + |n|, 1e-6)``; 0 when
        both gradients vanish
    """
    out, cache = net.forward(x)
    _, upstream = loss(out)
    analytic, _ = net.backward(cache, upstream)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for arr, grad in zip(net._params, analytic):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        indices = np.arange(flat.size)
        if sample is not None and sample < flat.size:
            indices = rng.choice(flat.size, size=sample, replace=False)
        for k in indices:
            original = flat[k]
            flat[k] = original + h
            plus = loss(net(x))[0]
            flat[k] = original - h
            minus = loss(net(x))[0]
            flat[k] = original
            numeric = (plus - minus) / (2.0 * h)
            err = abs(gflat[k] - numeric) / max(abs(gflat[k]) + abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
