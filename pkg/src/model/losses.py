"""
Ba loss của LUT và tổng có trọng số L = alpha*L_ae + beta*L_se + gamma*L_td.

L_ae: CTC, chuẩn hoá theo số frame (frame_mean).
L_se: MSE trung bình trên các phần tử hợp lệ.
L_td: NLL trung bình theo token (bỏ vị trí <pad>), label smoothing tuỳ chọn.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.core.functional import length_mask
from src.core.tensor import Tensor, as_tensor, getitem
from src.ctc.ctc_loss import ctc_loss_batch
from src.data.batching import Batch
from src.model.lut_model import LutModel
from src.teacher.teacher_model import TeacherModel
from src.utils.errors import ConfigError, DimensionError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class LossComponents:
    l_ae: float
    l_se: float
    l_td: Optional[float]     # None khi batch không có bản dịch (Step 1 / ASR)
    total: float

    def as_record(self) -> dict:
        return {"L_ae": self.l_ae, "L_se": self.l_se, "L_td": self.l_td, "L_total": self.total}


def distance_loss(v, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    MSE giữa output nhánh khoảng cách và vector teacher (hằng số).
    mask (có shape = v.shape bỏ trục cuối) chọn các hàng được tính; mặc định tất cả.
    """
    v = as_tensor(v)
    target = np.asarray(target, dtype=v.data.dtype)
    if v.shape != target.shape:
        raise DimensionError(f"distance_loss shape mismatch: prediction {v.shape} vs teacher {target.shape}")
    if mask is None:
        return ((v - target) ** 2).mean()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != v.shape[:-1]:
        raise DimensionError(f"distance_loss mask {mask.shape} does not match rows of {v.shape}")
    weights = mask[..., None].astype(v.data.dtype)
    n_elements = float(mask.sum()) * v.shape[-1]
    if n_elements == 0:
        raise DimensionError("distance_loss mask selects no elements")
    return (((v - target) ** 2) * weights).sum() * (1.0 / n_elements)


def translation_loss(
    log_probs,
    y_out: np.ndarray,
    mask: Optional[np.ndarray] = None,
    label_smoothing: float = 0.0,
) -> Tensor:
    """log_probs (B, L, V) đã log-softmax; y_out (B, L). Trung bình trên token không pad."""
    log_probs = as_tensor(log_probs)
    y_out = np.asarray(y_out, dtype=np.int64)
    if log_probs.ndim == 2:
        log_probs = log_probs.reshape((1,) + log_probs.shape)
        y_out = y_out[None]
        mask = None if mask is None else np.asarray(mask)[None]
    if log_probs.shape[:2] != y_out.shape:
        raise DimensionError(f"translation_loss: log-probs {log_probs.shape} vs targets {y_out.shape}")
    if mask is None:
        mask = np.ones(y_out.shape, dtype=bool)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise DimensionError("translation_loss called with no target tokens")

    nll = -getitem(log_probs, (rows, cols, y_out[rows, cols])).mean()
    if label_smoothing <= 0.0:
        return nll
    smooth = -getitem(log_probs, (rows, cols)).mean(axis=-1).mean()
    return nll * (1.0 - label_smoothing) + smooth * label_smoothing


def token_accuracy(log_probs, y_out: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[int, int]:
    """(số token đúng, tổng token) theo argmax teacher-forced; hoà -> id nhỏ nhất."""
    scores = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    predicted = np.argmax(scores, axis=-1)
    y_out = np.asarray(y_out)
    mask = np.ones(y_out.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return int(np.sum((predicted == y_out) & mask)), int(mask.sum())


def step1_weights(alpha: float, beta: float) -> Tuple[float, float, float]:
    """Trọng số cho Step 1 (chỉ L_ae, L_se), chuẩn hoá để alpha + beta = 1."""
    total = alpha + beta
    if total <= 0:
        raise ConfigError("Step-1 updates need alpha + beta > 0")
    return alpha / total, beta / total, 0.0


def semantic_targets(teacher: TeacherModel, batch: Batch, branch: str):
    """Vector teacher cho batch: (target, mask, per_token). per_token dùng làm query nhánh word."""
    per_token, lengths, h_c = teacher.embed_batch(batch.z)
    if branch == "seq":
        return h_c, None, per_token
    return per_token, length_mask(lengths, per_token.shape[1]), per_token


def total_loss(
    model: LutModel,
    batch: Batch,
    teacher: TeacherModel,
    weights: Optional[Tuple[float, float, float]] = None,
    include_translation: Optional[bool] = None,
    branch: Optional[str] = None,
) -> Tuple[Tensor, LossComponents]:
    """
    Batch ST có bản dịch: đủ ba thành phần. Batch ASR hoặc include_translation=False:
    decoder không chạy (gradient decoder giữ None).
    """
    alpha, beta, gamma = weights if weights is not None else model.cfg.weights
    branch = branch or model.cfg.branch
    use_decoder = batch.has_translation if include_translation is None else include_translation
    if use_decoder and not batch.has_translation:
        raise ConfigError(f"Batch of kind {batch.kind!r} has no translations for L_td")

    target, target_mask, per_token = semantic_targets(teacher, batch, branch)
    out = model.encode(batch.features, batch.frame_lengths, teacher_per_token=per_token, branch=branch)

    l_ae = ctc_loss_batch(out.ctc_log_probs, batch.frame_lengths, batch.ctc_targets, reduction="frame_mean")
    v = out.v0 if branch == "seq" else out.v1
    l_se = distance_loss(v, target, target_mask)
    total = l_ae * alpha + l_se * beta

    l_td_value = None
    if use_decoder:
        log_probs = model.decode_forward(batch.y_in, out.h_se, batch.frame_lengths)
        l_td = translation_loss(log_probs, batch.y_out, batch.y_mask, model.cfg.label_smoothing)
        total = total + l_td * gamma
        l_td_value = l_td.item()

    components = LossComponents(l_ae=l_ae.item(), l_se=l_se.item(), l_td=l_td_value, total=total.item())
    return total, components
