"""
Các khối neural dùng chung: attention, layer norm, feed-forward, embedding,
positional encoding, mask.
"""
import math
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from src.core.tensor import (
    Tensor,
    as_tensor,
    dropout,
    getitem,
    matmul,
    mean,
    power,
    relu,
    reshape,
    softmax,
    swapaxes,
    transpose,
    where,
)
from src.utils.errors import ConfigError, DimensionError

# điểm số gán cho vị trí bị mask trước softmax; exp(-1e9) == 0 trong float32/64
MASKED_SCORE = -1e9
LAYER_NORM_EPS = 1e-5


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    d_k: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    Softmax(Q·K^T / sqrt(d_k)) V trên hai trục cuối; mask (bool, True = giữ)
    broadcast được với (..., q, t).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"attention d_k mismatch: Q {q.shape} vs K {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention length mismatch: K {k.shape} vs V {v.shape}")

    d_k = q.shape[-1] if d_k is None else d_k
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(d_k))
    if mask is not None:
        scores = where(mask, scores, MASKED_SCORE)
    weights = softmax(scores, axis=-1)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    params: Mapping[str, Tensor],
    n_heads: int,
    mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
):
    """
    head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V); nối J head rồi nhân W^O
    (nếu params có "w_o"). Head i dùng cột [i*d_k, (i+1)*d_k) của mỗi W.
    Nhận input 2D (T, d) hoặc 3D (B, T, d); mask broadcast được với (B, J, Tq, Tk).
    """
    query, key, value = as_tensor(query), as_tensor(key), as_tensor(value)
    d_model = params["w_q"].shape[1]
    if d_model % n_heads != 0:
        raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
    if query.shape[-1] != params["w_q"].shape[0] or key.shape[-1] != params["w_k"].shape[0]:
        raise DimensionError(
            f"attention input width mismatch: query {query.shape}, key {key.shape}, "
            f"w_q {params['w_q'].shape}, w_k {params['w_k'].shape}"
        )

    unbatched = query.ndim == 2
    if unbatched:
        query = reshape(query, (1,) + query.shape)
        key = reshape(key, (1,) + key.shape)
        value = reshape(value, (1,) + value.shape)

    batch, t_q, _ = query.shape
    t_k = key.shape[1]
    d_k = d_model // n_heads

    def _split(x: Tensor, length: int) -> Tensor:
        return transpose(reshape(x, (batch, length, n_heads, d_k)), (0, 2, 1, 3))

    q = _split(matmul(query, params["w_q"]), t_q)
    k = _split(matmul(key, params["w_k"]), t_k)
    v = _split(matmul(value, params["w_v"]), t_k)

    heads, weights = scaled_dot_attention(q, k, v, d_k=d_k, mask=mask, return_weights=True)
    out = reshape(transpose(heads, (0, 2, 1, 3)), (batch, t_q, d_model))
    if params.get("w_o") is not None:
        out = matmul(out, params["w_o"])

    if unbatched:
        out = reshape(out, (t_q, d_model))
        weights = reshape(weights, (n_heads, t_q, t_k))
    return (out, weights) if return_weights else out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    # phương sai quần thể, epsilon cộng vào phương sai
    centered = x - mean(x, axis=-1, keepdims=True)
    variance = mean(centered * centered, axis=-1, keepdims=True)
    return centered * power(variance + eps, -0.5) * gain + bias


def feed_forward(
    x: Tensor,
    params: Mapping[str, Tensor],
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    hidden = relu(matmul(x, params["w_1"]) + params["b_1"])
    if training and dropout_rate > 0.0:
        hidden = dropout(hidden, dropout_rate, rng, training)
    return matmul(hidden, params["w_2"]) + params["b_2"]


def embed(ids: np.ndarray, table: Tensor) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"token id out of range [0, {table.shape[0]}): min={ids.min()} max={ids.max()}"
        )
    return getitem(table, ids)


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(t / 10000^(2i/d))."""
    position = np.arange(length, dtype=np.float64)[:, None]
    div_term = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    pe = np.zeros((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(position * div_term)
    pe[:, 1::2] = np.cos(position * div_term)[:, : d_model // 2]
    return pe


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))


def length_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """(B, max_len) bool, True tại vị trí hợp lệ."""
    lengths = np.asarray(lengths)
    return np.arange(max_len)[None, :] < lengths[:, None]


def key_padding_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """(B, 1, 1, max_len) để broadcast với điểm attention (B, J, Tq, Tk)."""
    return length_mask(lengths, max_len)[:, None, None, :]
