"""
Dense numerical core for the graph autoencoder.

Float64 numpy arrays carry every matrix. Forward primitives have explicit
backward companions; there is no general autodiff. Gradients flow through
plain dicts (name -> array) so that per-snapshot work can run on separate
threads and be reduced in a fixed order before the optimizer step.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from errors import DimensionError, DomainError, NonFiniteGradientError

logger = logging.getLogger("odgae.nn_core")

DTYPE = np.float64
NORM_EPS = 1e-12
SIGMOID_EPS = 1e-12

# Alias for documentation: a 2-D row-major float64 array
DenseMatrix = np.ndarray
Grads = Dict[str, np.ndarray]


def as_matrix(data, rows: Optional[int] = None, cols: Optional[int] = None) -> DenseMatrix:
    """Coerce ``data`` to a C-contiguous float64 matrix, checking shape and finiteness."""
    arr = np.ascontiguousarray(np.asarray(data, dtype=DTYPE))
    if arr.ndim == 1 and rows is not None and cols is not None:
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
        raise DimensionError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix entries must be finite")
    return arr


@dataclass
class Param:
    """A trainable matrix with its gradient slot."""
    name: str
    value: DenseMatrix
    grad: DenseMatrix = field(init=False)

    def __post_init__(self):
        self.value = as_matrix(self.value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class ModelParams:
    """Ordered, uniquely named collection of Params."""

    def __init__(self, params: Iterable[Param] = ()):
        self._params: "OrderedDict[str, Param]" = OrderedDict()
        for p in params:
            self.add(p)

    def add(self, param: Param) -> Param:
        if param.name in self._params:
            raise ValueError(f"duplicate parameter name '{param.name}'")
        self._params[param.name] = param
        return param

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Param]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params.keys())

    def zero_grad(self) -> None:
        for p in self:
            p.zero_grad()

    def accumulate(self, grads: Mapping[str, np.ndarray], scale: float = 1.0) -> None:
        """Add ``scale * grads[name]`` into each named grad slot."""
        for name, g in grads.items():
            slot = self._params[name].grad
            if g.shape != slot.shape:
                raise DimensionError(f"{name}: gradient shape {g.shape} != {slot.shape}")
            if scale == 1.0:
                slot += g
            else:
                slot += scale * g

    def copy(self) -> "ModelParams":
        """Deep copy of values; gradient slots start at zero."""
        return ModelParams(Param(p.name, p.value.copy()) for p in self)

    def values(self) -> Dict[str, np.ndarray]:
        return {name: p.value for name, p in self._params.items()}

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        for name, v in values.items():
            p = self._params[name]
            if v.shape != p.value.shape:
                raise DimensionError(f"{name}: shape {v.shape} != {p.value.shape}")
            np.copyto(p.value, v)

    def count(self) -> int:
        return int(sum(p.value.size for p in self))


class RngStream:
    """Deterministic random stream keyed by a seed and a spawn path.

    Child streams derived with the same keys always produce the same draws,
    independent of how much the parent has been consumed.
    """

    def __init__(self, seed: int, spawn_key: Sequence[int] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.spawn_key = tuple(int(k) for k in spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def derive(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.spawn_key + tuple(keys))

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


# -- initialization ---------------------------------------------------------

def init_matrix(rows: int, cols: int, rng: RngStream) -> DenseMatrix:
    """Glorot-uniform matrix."""
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(DTYPE)


def init_table(rows: int, cols: int, rng: RngStream) -> DenseMatrix:
    """Standard-normal embedding table."""
    return rng.normal(0.0, 1.0, size=(rows, cols)).astype(DTYPE)


# -- forward primitives and their backward companions -----------------------

def _matrix_of(U) -> np.ndarray:
    return U.value if isinstance(U, Param) else U


def linear(U, x: np.ndarray) -> np.ndarray:
    """Bias-free affine map y = U x; ``x`` may be one vector or a stack of row vectors."""
    W = _matrix_of(U)
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"linear: input length {x.shape[-1]} does not match {W.shape[0]}x{W.shape[1]} matrix"
        )
    if x.ndim == 1:
        return W @ x
    return x @ W.T


def linear_backward(U, x: np.ndarray, grad_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of y = U x w.r.t. U and x given dL/dy."""
    W = _matrix_of(U)
    if x.ndim == 1:
        return np.outer(grad_y, x), W.T @ grad_y
    return grad_y.T @ x, grad_y @ W


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(pre: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    return grad_y * (pre > 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function held inside [eps, 1 - eps] so outputs never saturate to 0 or 1."""
    return np.clip(expit(x), SIGMOID_EPS, 1.0 - SIGMOID_EPS)


def l2_normalize(x: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """x / max(||x||, eps) along the last axis; zero rows stay zero."""
    norms = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return x / np.maximum(norms, eps)


def l2_normalize_backward(x: np.ndarray, y: np.ndarray, grad_y: np.ndarray,
                          eps: float = NORM_EPS) -> np.ndarray:
    norms = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    denom = np.maximum(norms, eps)
    projected = grad_y - y * np.sum(grad_y * y, axis=-1, keepdims=True)
    return np.where(norms >= eps, projected, grad_y) / denom


def dropout_mask(shape, p: float, rng: Optional[RngStream], training: bool) -> Optional[np.ndarray]:
    """Inverted-dropout mask (entries 0 or 1/(1-p)), or None when dropout is inactive."""
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return None
    if rng is None:
        raise ValueError("dropout in training mode needs an RngStream")
    keep = rng.random(shape) >= p
    return keep.astype(DTYPE) / (1.0 - p)


def dropout(x: np.ndarray, p: float, rng: Optional[RngStream], training: bool) -> np.ndarray:
    mask = dropout_mask(np.shape(x), p, rng, training)
    return x if mask is None else x * mask


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments and hyperparameters for one ModelParams."""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, **kwargs) -> "AdamState":
        state = cls(lr=lr, **kwargs)
        for p in params:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        return state


def adam_step(params: ModelParams, state: AdamState) -> None:
    """One bias-corrected Adam update from the grad slots, which are then zeroed.

    Updates are lazy: entries whose gradient is exactly zero keep their value
    and moments, so untouched context-table rows never drift.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(p.name)
        if p.name not in state.m:
            raise DimensionError(f"no optimizer moments for parameter '{p.name}'")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for p in params:
        active = p.grad != 0.0
        if not active.any():
            continue
        g = p.grad[active]
        m = state.m[p.name]
        v = state.v[p.name]
        m[active] = b1 * m[active] + (1.0 - b1) * g
        v[active] = b2 * v[active] + (1.0 - b2) * (g * g)
        m_hat = m[active] / correction1
        v_hat = v[active] / correction2
        p.value[active] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.zero_grad()


# -- gradient verification --------------------------------------------------

def finite_diff_check(f: Callable[[ModelParams], float], params: ModelParams,
                      h: float = 1e-5,
                      indices: Optional[Sequence[Tuple[str, int]]] = None,
                      rng: Optional[RngStream] = None,
                      samples_per_param: int = 20) -> float:
    """Compare analytic grads (already in the grad slots) with central differences.

    Args:
        f: Scalar function of the current parameter values; must not touch grads.
        params: Parameters whose ``grad`` slots hold the analytic gradient.
        h: Finite-difference step.
        indices: (name, flat index) coordinates to check; sampled when omitted.
        rng: Stream used for sampling coordinates.
        samples_per_param: Coordinates drawn per parameter when sampling.

    Returns:
        Max relative error, denominator max(|analytic|, |numeric|, 1e-8).
    """
    if indices is None:
        rng = rng or RngStream(0)
        chosen: List[Tuple[str, int]] = []
        for p in params:
            size = p.value.size
            if size <= samples_per_param:
                chosen.extend((p.name, i) for i in range(size))
            else:
                chosen.extend((p.name, int(i)) for i in rng.choice(size, samples_per_param))
        indices = chosen

    worst = 0.0
    for name, idx in indices:
        p = params[name]
        flat = p.value.reshape(-1)
        original = flat[idx]
        flat[idx] = original + h
        f_plus = f(params)
        flat[idx] = original - h
        f_minus = f(params)
        flat[idx] = original
        numeric = (f_plus - f_minus) / (2.0 * h)
        analytic = float(p.grad.reshape(-1)[idx])
        denom = max(abs(analytic), abs(numeric), 1e-8)
        rel = abs(analytic - numeric) / denom
        if rel > worst:
            worst = rel
            logger.debug("finite diff %s[%d]: analytic=%.6e numeric=%.6e", name, idx, analytic, numeric)
    return worst
