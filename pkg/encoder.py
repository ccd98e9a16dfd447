"""
Graph encoder: weighted GraphSAGE layers, hour/weekday context embeddings
and the fully connected compression into a single graph embedding h_G.

Forward functions return caches consumed by ``encode_backward``; all
shapes are row-major with one row per node in canonical zone order.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, DimensionError
from nn_core import (Grads, ModelParams, Param, RngStream, dropout_mask, init_matrix, init_table,
                     l2_normalize, l2_normalize_backward, linear, linear_backward, relu,
                     relu_backward)
from od_graph import DAYS_PER_WEEK, FEATURE_DIM, HOURS_PER_DAY, ODSnapshot, TimeContext

logger = logging.getLogger("odgae.encoder")

HOUR_TABLE = "encoder.hour_table"
WEEK_TABLE = "encoder.week_table"
GRAPH_MAP = "encoder.U_G"


def sage_param_name(layer: int) -> str:
    return f"encoder.sage.{layer}"


class GraphLayerKind(str, Enum):
    WEIGHTED_SAGE = "weighted_sage"
    PLAIN_SAGE = "plain_sage"
    FULLY_CONNECTED = "fully_connected"
    NONE = "none"


@dataclass(frozen=True)
class ModelVariant:
    """Switches for the ablation variants."""
    use_context: bool = True
    use_graph_layers: GraphLayerKind = GraphLayerKind.WEIGHTED_SAGE
    context_in_decoder: bool = True

    def __post_init__(self):
        try:
            kind = GraphLayerKind(self.use_graph_layers)
        except ValueError:
            raise ConfigError(f"unknown graph layer kind '{self.use_graph_layers}'")
        object.__setattr__(self, "use_graph_layers", kind)
        if not self.use_context and kind is GraphLayerKind.NONE:
            raise ConfigError("a model needs context embeddings or graph layers")

    @property
    def decoder_context(self) -> bool:
        return self.use_context and self.context_in_decoder


VARIANTS: Dict[str, ModelVariant] = {
    "con-gae": ModelVariant(),
    "con-gae-sp": ModelVariant(use_context=False),
    "con-gae-t": ModelVariant(use_graph_layers=GraphLayerKind.NONE),
    "con-gae-fc": ModelVariant(use_graph_layers=GraphLayerKind.FULLY_CONNECTED),
    "con-gae-noncontextdec": ModelVariant(context_in_decoder=False),
    "con-gae-nonweightedenc": ModelVariant(use_graph_layers=GraphLayerKind.PLAIN_SAGE),
}


def variant_by_name(name: str) -> ModelVariant:
    try:
        return VARIANTS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown model variant '{name}' (known: {', '.join(VARIANTS)})")


def variant_name(variant: ModelVariant) -> Optional[str]:
    for name, v in VARIANTS.items():
        if v == variant:
            return name
    return None


@dataclass(frozen=True)
class ModelDims:
    """Layer widths of the autoencoder for a graph of ``n_nodes`` zones."""
    n_nodes: int
    layer_dims: Tuple[int, ...]
    d_hour: int
    d_week: int
    d_g: int
    d_e: int
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        values = [self.n_nodes, self.d_hour, self.d_week, self.d_g, self.d_e, self.feature_dim]
        if not self.layer_dims or min(values + list(self.layer_dims)) < 1:
            raise ConfigError(f"all model dimensions must be >= 1: {self}")

    @property
    def d_L(self) -> int:
        return self.layer_dims[-1]

    @property
    def graph_input_dim(self) -> int:
        return self.n_nodes * self.d_L + self.d_hour + self.d_week

    def layer_input_dim(self, layer: int) -> int:
        return self.feature_dim if layer == 0 else self.layer_dims[layer - 1]


def init_encoder_params(dims: ModelDims, rng: RngStream) -> List[Param]:
    params = []
    for l, d_out in enumerate(dims.layer_dims):
        params.append(Param(sage_param_name(l), init_matrix(d_out, 2 * dims.layer_input_dim(l), rng)))
    params.append(Param(HOUR_TABLE, init_table(HOURS_PER_DAY, dims.d_hour, rng)))
    params.append(Param(WEEK_TABLE, init_table(DAYS_PER_WEEK, dims.d_week, rng)))
    params.append(Param(GRAPH_MAP, init_matrix(dims.d_g, dims.graph_input_dim, rng)))
    return params


@dataclass
class EncoderParams:
    """Typed view of the encoder's entries in a ModelParams."""
    sage_layers: List[Param]
    hour_table: Param
    week_table: Param
    U_G: Param

    @classmethod
    def of(cls, params: ModelParams) -> "EncoderParams":
        layers = []
        while sage_param_name(len(layers)) in params:
            layers.append(params[sage_param_name(len(layers))])
        if not layers:
            raise DimensionError("model has no GraphSAGE layer parameters")
        return cls(layers, params[HOUR_TABLE], params[WEEK_TABLE], params[GRAPH_MAP])

    @property
    def d_L(self) -> int:
        return self.sage_layers[-1].shape[0]


# -- aggregation ------------------------------------------------------------

def aggregation_matrix(snapshot: ODSnapshot, weighted: bool = True) -> np.ndarray:
    """N x N matrix M with M[i, j] = w_ji / sum_k w_ki over in-edges of i.

    Rows of nodes without in-edges (or whose in-edge weights sum to zero)
    are zero. Unweighted mode treats every present edge as weight 1.
    """
    n = snapshot.node_count
    raw = np.zeros((n, n), dtype=np.float64)
    if snapshot.edge_count:
        raw[snapshot.dests, snapshot.origins] = snapshot.weights if weighted else 1.0
    totals = raw.sum(axis=1, keepdims=True)
    return np.divide(raw, totals, out=np.zeros_like(raw), where=totals > 0)


def weighted_mean_aggregate(target: int, snapshot: ODSnapshot, H: np.ndarray,
                            weighted: bool = True) -> np.ndarray:
    """Weighted mean of the in-neighbour embeddings of ``target``."""
    if H.shape[0] != snapshot.node_count:
        raise DimensionError(f"embedding matrix has {H.shape[0]} rows for {snapshot.node_count} nodes")
    return aggregation_matrix(snapshot, weighted)[target] @ H


# -- forward ----------------------------------------------------------------

@dataclass
class LayerCache:
    H_in: np.ndarray
    Z: np.ndarray
    P: np.ndarray
    R: np.ndarray
    H_norm: np.ndarray
    mask: Optional[np.ndarray]


@dataclass
class EncodeCache:
    variant: ModelVariant
    n_nodes: int
    context: TimeContext
    M: Optional[np.ndarray]
    layers: List[LayerCache] = field(default_factory=list)
    hour_mask: Optional[np.ndarray] = None
    week_mask: Optional[np.ndarray] = None
    h_hour: Optional[np.ndarray] = None
    h_week: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    pre_G: Optional[np.ndarray] = None
    h_G: Optional[np.ndarray] = None


def _layer_forward(U: Param, H: np.ndarray, M: Optional[np.ndarray], p_drop: float,
                   rng: Optional[RngStream], training: bool) -> LayerCache:
    agg = np.zeros_like(H) if M is None else M @ H
    Z = np.concatenate([H, agg], axis=1)
    P = linear(U, Z)
    R = relu(P)
    H_norm = l2_normalize(R)
    mask = dropout_mask(H_norm.shape, p_drop, rng, training)
    return LayerCache(H, Z, P, R, H_norm, mask)


def _layer_output(cache: LayerCache) -> np.ndarray:
    return cache.H_norm if cache.mask is None else cache.H_norm * cache.mask


def _check_features(features: Optional[np.ndarray], n: int, d: int) -> np.ndarray:
    if features is None:
        return np.zeros((n, d), dtype=np.float64)
    X = np.asarray(features, dtype=np.float64)
    if X.shape != (n, d):
        raise DimensionError(f"node features have shape {X.shape}, expected ({n}, {d})")
    return X


def sage_layer(layer: int, snapshot: ODSnapshot, H: np.ndarray, params: ModelParams,
               variant: ModelVariant = ModelVariant(), training: bool = False,
               rng: Optional[RngStream] = None, p_drop: float = 0.0) -> np.ndarray:
    """H_{l+1}[i] = normalize(relu(U^l concat(H_l[i], aggregate_i))), dropout in training."""
    U = params[sage_param_name(layer)]
    if U.shape[1] != 2 * H.shape[1] or H.shape[0] != snapshot.node_count:
        raise DimensionError(f"layer {layer}: input {H.shape} does not fit weight {U.shape}")
    kind = variant.use_graph_layers
    M = None if kind is GraphLayerKind.FULLY_CONNECTED else aggregation_matrix(
        snapshot, weighted=kind is not GraphLayerKind.PLAIN_SAGE)
    return _layer_output(_layer_forward(U, H, M, p_drop, rng, training))


def context_lookup(ctx: TimeContext, params: ModelParams, training: bool = False,
                   rng: Optional[RngStream] = None,
                   p_drop: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Hour and weekday embedding rows for ``ctx`` (with dropout in training)."""
    h_hour = params[HOUR_TABLE].value[ctx.hour].copy()
    h_week = params[WEEK_TABLE].value[ctx.dow].copy()
    hour_mask = dropout_mask(h_hour.shape, p_drop, rng, training)
    week_mask = dropout_mask(h_week.shape, p_drop, rng, training)
    if hour_mask is not None:
        h_hour *= hour_mask
    if week_mask is not None:
        h_week *= week_mask
    return h_hour, h_week


def graph_embed(H_L: np.ndarray, h_hour: np.ndarray, h_week: np.ndarray, params: ModelParams,
                variant: ModelVariant = ModelVariant()) -> np.ndarray:
    """h_G = relu(U_G concat(H_L[0], ..., H_L[N-1], h_hour, h_week))."""
    if not variant.use_context:
        h_hour = np.zeros_like(h_hour)
        h_week = np.zeros_like(h_week)
    v = np.concatenate([H_L.reshape(-1), h_hour, h_week])
    return relu(linear(params[GRAPH_MAP], v))


def encode_forward(snapshot: ODSnapshot, params: ModelParams, variant: ModelVariant,
                   training: bool, rng: Optional[RngStream], features: Optional[np.ndarray],
                   p_drop: float = 0.0) -> Tuple[np.ndarray, EncodeCache]:
    enc = EncoderParams.of(params)
    n = snapshot.node_count
    expected_cols = enc.U_G.shape[1] - enc.hour_table.shape[1] - enc.week_table.shape[1]
    if expected_cols != n * enc.d_L:
        raise DimensionError(f"snapshot has {n} nodes but the model was built for {expected_cols // enc.d_L}")
    drop = p_drop if training else 0.0
    kind = variant.use_graph_layers

    M = None
    if kind in (GraphLayerKind.WEIGHTED_SAGE, GraphLayerKind.PLAIN_SAGE):
        M = aggregation_matrix(snapshot, weighted=kind is GraphLayerKind.WEIGHTED_SAGE)
    cache = EncodeCache(variant, n, snapshot.context, M)

    if kind is GraphLayerKind.NONE:
        H = np.zeros((n, enc.d_L), dtype=np.float64)
    else:
        H = _check_features(features, n, enc.sage_layers[0].shape[1] // 2)
        for U in enc.sage_layers:
            layer = _layer_forward(U, H, M, drop, rng, training)
            cache.layers.append(layer)
            H = _layer_output(layer)

    if variant.use_context:
        ctx = snapshot.context
        cache.hour_mask = dropout_mask((enc.hour_table.shape[1],), drop, rng, training)
        cache.week_mask = dropout_mask((enc.week_table.shape[1],), drop, rng, training)
        h_hour = enc.hour_table.value[ctx.hour].copy()
        h_week = enc.week_table.value[ctx.dow].copy()
        if cache.hour_mask is not None:
            h_hour *= cache.hour_mask
        if cache.week_mask is not None:
            h_week *= cache.week_mask
    else:
        h_hour = np.zeros(enc.hour_table.shape[1])
        h_week = np.zeros(enc.week_table.shape[1])
    cache.h_hour, cache.h_week = h_hour, h_week

    cache.v = np.concatenate([H.reshape(-1), h_hour, h_week])
    cache.pre_G = linear(enc.U_G, cache.v)
    cache.h_G = relu(cache.pre_G)
    return cache.h_G, cache


def encode(snapshot: ODSnapshot, params: ModelParams, variant: ModelVariant = ModelVariant(),
           mode: str = "eval", rng: Optional[RngStream] = None,
           features: Optional[np.ndarray] = None, p_drop: float = 0.0) -> np.ndarray:
    """Graph embedding of ``snapshot``; eval mode disables all dropout."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got '{mode}'")
    h_G, _ = encode_forward(snapshot, params, variant, mode == "train", rng, features, p_drop)
    return h_G


# -- backward ---------------------------------------------------------------

def encode_backward(cache: EncodeCache, grad_hG: np.ndarray, params: ModelParams,
                    grad_hour: Optional[np.ndarray] = None,
                    grad_week: Optional[np.ndarray] = None) -> Grads:
    """Parameter gradients given dL/dh_G and any extra gradient on the context vectors."""
    enc = EncoderParams.of(params)
    grads: Grads = {}
    g_pre = relu_backward(cache.pre_G, grad_hG)
    grads[GRAPH_MAP], g_v = linear_backward(enc.U_G, cache.v, g_pre)

    n, d_L = cache.n_nodes, enc.d_L
    d_hour = enc.hour_table.shape[1]
    g_H = g_v[:n * d_L].reshape(n, d_L)

    if cache.variant.use_context:
        g_hour = g_v[n * d_L:n * d_L + d_hour].copy()
        g_week = g_v[n * d_L + d_hour:].copy()
        if grad_hour is not None:
            g_hour += grad_hour
        if grad_week is not None:
            g_week += grad_week
        if cache.hour_mask is not None:
            g_hour *= cache.hour_mask
        if cache.week_mask is not None:
            g_week *= cache.week_mask
        hour_grad = np.zeros_like(enc.hour_table.value)
        hour_grad[cache.context.hour] = g_hour
        week_grad = np.zeros_like(enc.week_table.value)
        week_grad[cache.context.dow] = g_week
        grads[HOUR_TABLE] = hour_grad
        grads[WEEK_TABLE] = week_grad

    for l in range(len(cache.layers) - 1, -1, -1):
        layer = cache.layers[l]
        U = enc.sage_layers[l]
        if layer.mask is not None:
            g_H = g_H * layer.mask
        g_R = l2_normalize_backward(layer.R, layer.H_norm, g_H)
        g_P = relu_backward(layer.P, g_R)
        grads[sage_param_name(l)], g_Z = linear_backward(U, layer.Z, g_P)
        if l > 0:
            d_in = layer.H_in.shape[1]
            g_H = g_Z[:, :d_in]
            if cache.M is not None:
                g_H = g_H + cache.M.T @ g_Z[:, d_in:]
    return grads
