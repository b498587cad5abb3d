"""
Module/Parameter và các layer Transformer (post-norm) dựng trên functional.
"""
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.core import functional as F
from src.core.tensor import (
    Parameter,
    Tensor,
    dropout,
    getitem,
    matmul,
    pad,
    reshape,
    transpose,
)
from src.utils.checkpoint_utils import arrays_hash
from src.utils.errors import CheckpointError, ConfigError


class Module:
    """Gốc của các layer: liệt kê tham số theo thứ tự khai báo thuộc tính."""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if strict and (missing or unexpected):
            raise CheckpointError(
                f"State mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}"
            )
        for name, param in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(
                    f"Shape mismatch for {name}: checkpoint {value.shape} vs model {param.shape}"
                )
            param.data = value.astype(param.data.dtype)

    def state_hash(self) -> str:
        return arrays_hash(self.state_dict())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(_xavier(rng, d_in, d_out))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class Embedding(Module):
    def __init__(self, n_tokens: int, d_model: int, rng: np.random.Generator):
        self.table = Parameter(rng.normal(0.0, d_model ** -0.5, size=(n_tokens, d_model)))
        self.scale = math.sqrt(d_model)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return F.embed(ids, self.table) * self.scale


class LayerNorm(Module):
    def __init__(self, d_model: int, eps: float = F.LAYER_NORM_EPS):
        self.gain = Parameter(np.ones(d_model))
        self.bias = Parameter(np.zeros(d_model))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator, dropout_rate: float = 0.0):
        self.w_1 = Parameter(_xavier(rng, d_model, d_ff))
        self.b_1 = Parameter(np.zeros(d_ff))
        self.w_2 = Parameter(_xavier(rng, d_ff, d_model))
        self.b_2 = Parameter(np.zeros(d_model))
        self.dropout_rate = dropout_rate
        self._rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        params = {"w_1": self.w_1, "b_1": self.b_1, "w_2": self.w_2, "b_2": self.b_2}
        return F.feed_forward(x, params, self.dropout_rate, self._rng, self.training)


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, output_projection: bool = True):
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.w_q = Parameter(_xavier(rng, d_model, d_model))
        self.w_k = Parameter(_xavier(rng, d_model, d_model))
        self.w_v = Parameter(_xavier(rng, d_model, d_model))
        self.w_o = Parameter(_xavier(rng, d_model, d_model)) if output_projection else None
        self.n_heads = n_heads
        self.record_weights = False
        self.last_weights: Optional[np.ndarray] = None

    def __call__(self, query: Tensor, key: Tensor, value: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        params = {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_o": self.w_o}
        out, weights = F.multi_head_attention(
            query, key, value, params, self.n_heads, mask=mask, return_weights=True
        )
        if self.record_weights:
            self.last_weights = weights.data.copy()
        return out


class EncoderLayer(Module):
    """sublayer -> dropout -> cộng residual -> layer norm (post-norm)."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator, dropout_rate: float = 0.0):
        self.self_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm_1 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng, dropout_rate)
        self.norm_2 = LayerNorm(d_model)
        self.dropout_rate = dropout_rate
        self._rng = rng

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        attn = self.self_attn(x, x, x, mask)
        x = self.norm_1(x + dropout(attn, self.dropout_rate, self._rng, self.training))
        ff = self.ff(x)
        return self.norm_2(x + dropout(ff, self.dropout_rate, self._rng, self.training))


class DecoderLayer(Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator, dropout_rate: float = 0.0):
        self.self_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm_1 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm_2 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng, dropout_rate)
        self.norm_3 = LayerNorm(d_model)
        self.dropout_rate = dropout_rate
        self._rng = rng

    def __call__(
        self,
        y: Tensor,
        memory: Tensor,
        self_mask: Optional[np.ndarray] = None,
        memory_mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        rate, rng, training = self.dropout_rate, self._rng, self.training
        y = self.norm_1(y + dropout(self.self_attn(y, y, y, self_mask), rate, rng, training))
        y = self.norm_2(y + dropout(self.cross_attn(y, memory, memory, memory_mask), rate, rng, training))
        return self.norm_3(y + dropout(self.ff(y), rate, rng, training))


class Conv2d(Module):
    """
    Conv 2D qua im2col: input (B, C_in, H, W) -> (B, C_out, H_out, W_out),
    padding "same-ish" = kernel // 2 mỗi chiều.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Tuple[int, int],
        stride: Tuple[int, int],
        rng: np.random.Generator,
    ):
        k_h, k_w = kernel
        fan_in = in_channels * k_h * k_w
        self.weight = Parameter(_xavier(rng, fan_in, out_channels, shape=(fan_in, out_channels)))
        self.bias = Parameter(np.zeros(out_channels))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (k_h, k_w)
        self.stride = tuple(stride)
        self.padding = (k_h // 2, k_w // 2)

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        (k_h, k_w), (s_h, s_w), (p_h, p_w) = self.kernel, self.stride, self.padding
        return (height + 2 * p_h - k_h) // s_h + 1, (width + 2 * p_w - k_w) // s_w + 1

    def __call__(self, x: Tensor) -> Tensor:
        batch, _, height, width = x.shape
        (k_h, k_w), (s_h, s_w), (p_h, p_w) = self.kernel, self.stride, self.padding
        out_h, out_w = self.output_size(height, width)

        padded = pad(x, ((0, 0), (0, 0), (p_h, p_h), (p_w, p_w)))
        rows = (np.arange(out_h) * s_h)[:, None] + np.arange(k_h)[None, :]
        cols = (np.arange(out_w) * s_w)[:, None] + np.arange(k_w)[None, :]
        index = (slice(None), slice(None), rows[:, None, :, None], cols[None, :, None, :])
        patches = getitem(padded, index)                         # (B, C_in, H_o, W_o, k_h, k_w)
        patches = transpose(patches, (0, 2, 3, 1, 4, 5))
        patches = reshape(patches, (batch, out_h, out_w, self.in_channels * k_h * k_w))
        out = matmul(patches, self.weight) + self.bias           # (B, H_o, W_o, C_out)
        return transpose(out, (0, 3, 1, 2))
