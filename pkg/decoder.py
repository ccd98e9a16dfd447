"""
Graph decoder: recovers per-node embeddings from h_G and the time context,
then predicts directed edge weights with a two-layer MLP over the
concatenated endpoint embeddings.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from encoder import ModelDims, ModelVariant, context_lookup
from errors import DimensionError, QueryError
from nn_core import (Grads, ModelParams, Param, RngStream, init_matrix, linear, linear_backward,
                     relu, relu_backward, sigmoid)
from od_graph import TimeContext

logger = logging.getLogger("odgae.decoder")

NODE_MAP = "decoder.U_G_prime"
EDGE_HIDDEN = "decoder.U_dec1"
EDGE_OUT = "decoder.U_dec2"


def init_decoder_params(dims: ModelDims, rng: RngStream) -> List[Param]:
    return [
        Param(NODE_MAP, init_matrix(dims.n_nodes * dims.d_L, dims.d_g + dims.d_hour + dims.d_week, rng)),
        Param(EDGE_HIDDEN, init_matrix(dims.d_e, 2 * dims.d_L, rng)),
        Param(EDGE_OUT, init_matrix(1, dims.d_e, rng)),
    ]


@dataclass
class DecoderParams:
    U_G_prime: Param
    U_dec1: Param
    U_dec2: Param

    @classmethod
    def of(cls, params: ModelParams) -> "DecoderParams":
        return cls(params[NODE_MAP], params[EDGE_HIDDEN], params[EDGE_OUT])

    @property
    def d_L(self) -> int:
        return self.U_dec1.shape[1] // 2

    @property
    def n_nodes(self) -> int:
        return self.U_G_prime.shape[0] // self.d_L


@dataclass
class DecodeCache:
    u: np.ndarray
    pre_nodes: np.ndarray
    H: np.ndarray
    origins: np.ndarray
    dests: np.ndarray
    C: np.ndarray
    A: np.ndarray
    R: np.ndarray
    pred: np.ndarray
    d_g: int
    d_hour: int
    context_used: bool


def _decoder_input(h_G: np.ndarray, h_hour: np.ndarray, h_week: np.ndarray,
                   variant: ModelVariant) -> Tuple[np.ndarray, bool]:
    if not variant.decoder_context:
        return np.concatenate([h_G, np.zeros_like(h_hour), np.zeros_like(h_week)]), False
    return np.concatenate([h_G, h_hour, h_week]), True


def decode_nodes(h_G: np.ndarray, h_hour: np.ndarray, h_week: np.ndarray, params: ModelParams,
                 variant: ModelVariant = ModelVariant()) -> np.ndarray:
    """N x d_L node embeddings unstacked from relu(U'_G concat(h_G, h_hour, h_week))."""
    dec = DecoderParams.of(params)
    u, _ = _decoder_input(h_G, h_hour, h_week, variant)
    return relu(linear(dec.U_G_prime, u)).reshape(dec.n_nodes, dec.d_L)


def predict_edge(h_i: np.ndarray, h_j: np.ndarray, params: ModelParams) -> float:
    """w'_ij = sigmoid(U2 relu(U1 concat(h_i, h_j))); not symmetric in (i, j)."""
    dec = DecoderParams.of(params)
    if h_i.shape != (dec.d_L,) or h_j.shape != (dec.d_L,):
        raise DimensionError(f"endpoint embeddings must have length {dec.d_L}")
    hidden = relu(linear(dec.U_dec1, np.concatenate([h_i, h_j])))
    return float(sigmoid(linear(dec.U_dec2, hidden))[0])


def _check_queries(origins: np.ndarray, dests: np.ndarray, n: int) -> None:
    if len(origins) and (min(origins.min(), dests.min()) < 0 or max(origins.max(), dests.max()) >= n):
        raise QueryError(f"edge query references a node outside [0, {n})")


def decode_forward(h_G: np.ndarray, h_hour: np.ndarray, h_week: np.ndarray,
                   origins: np.ndarray, dests: np.ndarray, params: ModelParams,
                   variant: ModelVariant) -> Tuple[np.ndarray, DecodeCache]:
    dec = DecoderParams.of(params)
    origins = np.asarray(origins, dtype=np.int64)
    dests = np.asarray(dests, dtype=np.int64)
    _check_queries(origins, dests, dec.n_nodes)
    u, context_used = _decoder_input(h_G, h_hour, h_week, variant)
    pre_nodes = linear(dec.U_G_prime, u)
    H = relu(pre_nodes).reshape(dec.n_nodes, dec.d_L)
    C = np.concatenate([H[origins], H[dests]], axis=1)
    A = linear(dec.U_dec1, C)
    R = relu(A)
    pred = sigmoid(linear(dec.U_dec2, R)).reshape(-1)
    cache = DecodeCache(u, pre_nodes, H, origins, dests, C, A, R, pred,
                        len(h_G), len(h_hour), context_used)
    return pred, cache


def decode_backward(cache: DecodeCache, grad_pred: np.ndarray,
                    params: ModelParams) -> Tuple[Grads, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    """Returns (parameter grads, dL/dh_G, dL/dh_hour, dL/dh_week)."""
    dec = DecoderParams.of(params)
    grads: Grads = {}
    g_out = (grad_pred * cache.pred * (1.0 - cache.pred)).reshape(-1, 1)
    grads[EDGE_OUT], g_R = linear_backward(dec.U_dec2, cache.R, g_out)
    g_A = relu_backward(cache.A, g_R)
    grads[EDGE_HIDDEN], g_C = linear_backward(dec.U_dec1, cache.C, g_A)

    d_L = dec.d_L
    g_H = np.zeros_like(cache.H)
    np.add.at(g_H, cache.origins, g_C[:, :d_L])
    np.add.at(g_H, cache.dests, g_C[:, d_L:])
    g_pre = relu_backward(cache.pre_nodes, g_H.reshape(-1))
    grads[NODE_MAP], g_u = linear_backward(dec.U_G_prime, cache.u, g_pre)

    g_hG = g_u[:cache.d_g]
    if not cache.context_used:
        return grads, g_hG, None, None
    g_hour = g_u[cache.d_g:cache.d_g + cache.d_hour]
    g_week = g_u[cache.d_g + cache.d_hour:]
    return grads, g_hG, g_hour, g_week


def reconstruct(h_G: np.ndarray, ctx: TimeContext, edge_queries: Sequence[Tuple[int, int]],
                params: ModelParams, variant: ModelVariant = ModelVariant()) -> np.ndarray:
    """Predicted weights for the queried (origin, dest) pairs, in query order."""
    queries = list(edge_queries)
    if not queries:
        return np.zeros(0, dtype=np.float64)
    h_hour, h_week = context_lookup(ctx, params)
    if not variant.use_context:
        h_hour, h_week = np.zeros_like(h_hour), np.zeros_like(h_week)
    origins = np.array([q[0] for q in queries], dtype=np.int64)
    dests = np.array([q[1] for q in queries], dtype=np.int64)
    pred, _ = decode_forward(h_G, h_hour, h_week, origins, dests, params, variant)
    return pred
