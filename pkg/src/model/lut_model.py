"""
LUT: Listen (acoustic encoder + CTC) -> Understand (semantic encoder + nhánh
khoảng cách seq/word) -> Translate (decoder attend vào h_se).

Mọi phương thức nhận batch (B, T, ...) kèm lengths; input 2D (một utterance)
được tự thêm trục batch và kết quả trả về bỏ trục đó.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core import functional as F
from src.core.layers import (
    Conv2d,
    DecoderLayer,
    Embedding,
    EncoderLayer,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
)
from src.core.tensor import Tensor, as_tensor, get_default_dtype, log_softmax, reshape, transpose
from src.model.model_config import ModelConfig
from src.utils.errors import ConfigError, DimensionError, EmptyInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class EncoderOutputs:
    h_ae: Tensor                   # (B, T_x, d)
    ctc_log_probs: Tensor          # (B, T_x, n_ctc_labels)
    h_se: Tensor                   # (B, T_x, d)
    frame_lengths: np.ndarray
    v0: Optional[Tensor] = None    # (B, d), nhánh seq
    v1: Optional[Tensor] = None    # (B, T_z, d), nhánh word, chỉ khi có z
    acoustic_layers: List[Tensor] = field(default_factory=list)
    semantic_layers: List[Tensor] = field(default_factory=list)


def _lengths_or_full(x: Tensor, lengths: Optional[np.ndarray]) -> np.ndarray:
    if lengths is None:
        return np.full(x.shape[0], x.shape[1], dtype=np.int64)
    return np.asarray(lengths, dtype=np.int64)


class LutModel(Module):
    def __init__(self, cfg: ModelConfig):
        if cfg.input_dim < 1 or cfg.n_ctc_labels < 2 or cfg.tgt_vocab_size < 1:
            raise ConfigError(
                "ModelConfig needs input_dim, n_ctc_labels and tgt_vocab_size filled in from the data "
                f"(got {cfg.input_dim}, {cfg.n_ctc_labels}, {cfg.tgt_vocab_size})"
            )
        if cfg.conv_stride[0] != 1 or cfg.conv_kernel[0] % 2 == 0:
            raise ConfigError("seq-branch conv must keep the time axis: stride 1 and an odd kernel over time")
        rng = np.random.default_rng(cfg.seed)
        d, j = cfg.d_model, cfg.n_heads
        self.cfg = cfg

        # --- Listen ---
        self.input_proj = Linear(cfg.input_dim, d, rng)
        self.acoustic_layers = [EncoderLayer(d, j, cfg.d_ff, rng, cfg.dropout) for _ in range(cfg.n_ae)]
        self.ctc_head = Linear(d, cfg.n_ctc_labels, rng)

        # --- Understand ---
        self.semantic_layers = [EncoderLayer(d, j, cfg.d_ff, rng, cfg.dropout) for _ in range(cfg.n_se)]
        # conv 2D trên (thời gian, chiều ẩn); số kênh = stride theo chiều ẩn để độ rộng quay về ~d
        self.seq_conv = Conv2d(1, cfg.conv_stride[1], cfg.conv_kernel, cfg.conv_stride, rng)
        _, out_w = self.seq_conv.output_size(1, d)
        conv_width = out_w * cfg.conv_stride[1]
        self.seq_proj = Linear(conv_width, d, rng) if conv_width != d else None
        self.seq_norm = LayerNorm(d)
        self.word_attn = MultiHeadAttention(d, j, rng)

        # --- Translate ---
        self.tgt_embedding = Embedding(cfg.tgt_vocab_size, d, rng)
        self.decoder_layers = [DecoderLayer(d, j, cfg.d_ff, rng, cfg.dropout) for _ in range(cfg.n_td)]
        self.out_proj = Linear(d, cfg.tgt_vocab_size, rng)

    # -------------------------------------------------------------------
    # Listen
    # -------------------------------------------------------------------
    def acoustic_encode(
        self, x, lengths: Optional[np.ndarray] = None, return_layers: bool = False
    ):
        """x (B, T, F) -> (h_ae (B, T, d), ctc_log_probs (B, T, C)); return_layers thêm list output từng lớp."""
        x = as_tensor(x)
        single = x.ndim == 2
        if single:
            x = reshape(x, (1,) + x.shape)
        if x.shape[1] == 0:
            raise EmptyInputError("acoustic_encode received an utterance with no frames")
        if x.shape[-1] != self.cfg.input_dim:
            raise DimensionError(f"feature width {x.shape[-1]} != model input_dim {self.cfg.input_dim}")
        lengths = _lengths_or_full(x, lengths)

        h = self.input_proj(x) + F.positional_encoding(x.shape[1], self.cfg.d_model)
        mask = F.key_padding_mask(lengths, x.shape[1])
        layers = []
        for layer in self.acoustic_layers:
            h = layer(h, mask)
            layers.append(h)
        ctc_log_probs = log_softmax(self.ctc_head(h), axis=-1)

        if single:
            h = reshape(h, h.shape[1:])
            ctc_log_probs = reshape(ctc_log_probs, ctc_log_probs.shape[1:])
            layers = [reshape(t, t.shape[1:]) for t in layers]
        return (h, ctc_log_probs, layers) if return_layers else (h, ctc_log_probs)

    # -------------------------------------------------------------------
    # Understand
    # -------------------------------------------------------------------
    def semantic_encode(self, h_ae, lengths: Optional[np.ndarray] = None, return_layers: bool = False):
        h = as_tensor(h_ae)
        single = h.ndim == 2
        if single:
            h = reshape(h, (1,) + h.shape)
        lengths = _lengths_or_full(h, lengths)
        mask = F.key_padding_mask(lengths, h.shape[1])
        layers = []
        for layer in self.semantic_layers:
            h = layer(h, mask)
            layers.append(h)
        if single:
            h = reshape(h, h.shape[1:])
            layers = [reshape(t, t.shape[1:]) for t in layers]
        return (h, layers) if return_layers else h

    def seq_branch(self, h_se, lengths: Optional[np.ndarray] = None) -> Tensor:
        """conv 2D -> layer norm -> trung bình theo thời gian trên frame hợp lệ -> (B, d)."""
        h = as_tensor(h_se)
        single = h.ndim == 2
        if single:
            h = reshape(h, (1,) + h.shape)
        batch, n_frames, d = h.shape
        lengths = _lengths_or_full(h, lengths)
        valid = F.length_mask(lengths, n_frames)[:, :, None].astype(get_default_dtype())

        image = reshape(h * valid, (batch, 1, n_frames, d))
        conv = self.seq_conv(image)                                  # (B, C, T, W_o)
        channels, width = conv.shape[1], conv.shape[3]
        feats = reshape(transpose(conv, (0, 2, 1, 3)), (batch, n_frames, channels * width))
        if self.seq_proj is not None:
            feats = self.seq_proj(feats)
        feats = self.seq_norm(feats)
        pooled = (feats * valid).sum(axis=1) * (1.0 / lengths.astype(get_default_dtype()))[:, None]
        return reshape(pooled, (d,)) if single else pooled

    def word_branch(self, h_se, teacher_per_token: np.ndarray, lengths: Optional[np.ndarray] = None) -> Tensor:
        """Q = vector teacher (hằng), K = V = h_se; kết quả có đúng T_z hàng."""
        h = as_tensor(h_se)
        queries = np.asarray(teacher_per_token, dtype=np.float64)
        single = h.ndim == 2
        if single:
            h = reshape(h, (1,) + h.shape)
            queries = queries[None]
        if queries.shape[1] == 0:
            raise EmptyInputError("word_branch needs at least one teacher vector (T_z = 0)")
        if queries.shape[-1] != self.cfg.d_model:
            raise DimensionError(f"teacher width {queries.shape[-1]} != d_model {self.cfg.d_model}")
        lengths = _lengths_or_full(h, lengths)
        mask = F.key_padding_mask(lengths, h.shape[1])
        v1 = self.word_attn(Tensor(queries), h, h, mask)
        return reshape(v1, v1.shape[1:]) if single else v1

    # -------------------------------------------------------------------
    # Translate
    # -------------------------------------------------------------------
    def decode_forward(self, y_prefix: np.ndarray, h_se, frame_lengths: Optional[np.ndarray] = None) -> Tensor:
        """y_prefix (B, L) bắt đầu bằng <sos> -> log-prob (B, L, V_tgt); vị trí i chỉ thấy prefix <= i."""
        y_prefix = np.asarray(y_prefix, dtype=np.int64)
        memory = as_tensor(h_se)
        single = y_prefix.ndim == 1
        if single:
            y_prefix = y_prefix[None]
            memory = reshape(memory, (1,) + memory.shape)
        length = y_prefix.shape[1]
        if length > self.cfg.max_st_len:
            raise DimensionError(f"decoder prefix length {length} exceeds max_st_len={self.cfg.max_st_len}")
        frame_lengths = _lengths_or_full(memory, frame_lengths)

        y = self.tgt_embedding(y_prefix) + F.positional_encoding(length, self.cfg.d_model)
        self_mask = F.causal_mask(length)
        memory_mask = F.key_padding_mask(frame_lengths, memory.shape[1])
        for layer in self.decoder_layers:
            y = layer(y, memory, self_mask, memory_mask)
        log_probs = log_softmax(self.out_proj(y), axis=-1)
        return reshape(log_probs, log_probs.shape[1:]) if single else log_probs

    # -------------------------------------------------------------------
    # tiện ích
    # -------------------------------------------------------------------
    def encode(
        self,
        x,
        lengths: Optional[np.ndarray] = None,
        teacher_per_token: Optional[np.ndarray] = None,
        branch: Optional[str] = None,
        return_layers: bool = False,
    ) -> EncoderOutputs:
        """
        Chạy Listen + Understand. branch=None: chỉ encoder (suy luận, không cần z
        hay teacher); "seq"/"word": tính thêm v0 / v1.
        """
        x = as_tensor(x)
        if x.ndim != 3:
            raise DimensionError(f"encode expects a batch (B, T, F), got {x.shape}")
        lengths = _lengths_or_full(x, lengths)
        h_ae, ctc_log_probs, ae_layers = self.acoustic_encode(x, lengths, return_layers=True)
        h_se, se_layers = self.semantic_encode(h_ae, lengths, return_layers=True)
        out = EncoderOutputs(h_ae=h_ae, ctc_log_probs=ctc_log_probs, h_se=h_se, frame_lengths=lengths)
        if return_layers:
            out.acoustic_layers, out.semantic_layers = ae_layers, se_layers
        if branch == "seq":
            out.v0 = self.seq_branch(h_se, lengths)
        elif branch == "word":
            if teacher_per_token is None:
                raise ConfigError("word-level branch needs teacher vectors for the transcription")
            out.v1 = self.word_branch(h_se, teacher_per_token, lengths)
        elif branch is not None:
            raise ConfigError(f"Unknown branch {branch!r}")
        return out

    def attention_modules(self) -> Dict[str, MultiHeadAttention]:
        named = {}
        for i, layer in enumerate(self.acoustic_layers):
            named[f"acoustic.{i}.self"] = layer.self_attn
        for i, layer in enumerate(self.semantic_layers):
            named[f"semantic.{i}.self"] = layer.self_attn
        named["word_branch"] = self.word_attn
        for i, layer in enumerate(self.decoder_layers):
            named[f"decoder.{i}.self"] = layer.self_attn
            named[f"decoder.{i}.cross"] = layer.cross_attn
        return named

    def record_attention(self, enabled: bool = True) -> None:
        for module in self.attention_modules().values():
            module.record_weights = enabled
            if not enabled:
                module.last_weights = None

    def attention_maps(self) -> Dict[str, np.ndarray]:
        return {
            name: module.last_weights
            for name, module in self.attention_modules().items()
            if module.last_weights is not None
        }

    def decoder_parameters(self) -> List[Tuple[str, Tensor]]:
        prefixes = ("tgt_embedding.", "decoder_layers.", "out_proj.")
        return [(n, p) for n, p in self.named_parameters() if n.startswith(prefixes)]
