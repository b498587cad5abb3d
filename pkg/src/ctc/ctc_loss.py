"""
CTC loss: lattice forward trong log-space, dựng bằng các phép toán Tensor
nên gradient có được nhờ backward() của tape (không viết backward tay).

Không gian nhãn CTC: id 0 = blank, các id còn lại là token (xem Vocab.ctc_label_ids).
Target mở rộng z' = [blk, z1, blk, z2, ..., blk], độ dài 2*T_z + 1.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.core.tensor import (
    Tensor,
    as_tensor,
    getitem,
    logsumexp,
    no_grad,
    pad,
    stack,
    where,
)
from src.utils.errors import ConfigError, DimensionError, InfeasibleAlignmentError

BLANK = 0
# thay cho -inf: exp(NEG - m) == 0 nhưng không sinh NaN khi mọi ô đều NEG
NEG = -1e30

REDUCTIONS = ("none", "sum", "mean", "frame_mean")


def collapse(raw: Sequence[int], blank: int = BLANK) -> List[int]:
    """Gộp các nhãn lặp liên tiếp trước, rồi bỏ blank."""
    out = []
    prev = None
    for label in raw:
        label = int(label)
        if label != prev and label != blank:
            out.append(label)
        prev = label
    return out


def required_frames(z: Sequence[int]) -> int:
    """Số frame tối thiểu: T_z + số cặp nhãn kề nhau trùng nhau (cần blank chen giữa)."""
    z = list(z)
    repeats = sum(1 for a, b in zip(z, z[1:]) if a == b)
    return len(z) + repeats


@dataclass(frozen=True)
class CtcTarget:
    labels: Tuple[int, ...]
    blank: int = BLANK

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(t) for t in self.labels))
        if self.blank in self.labels:
            raise ConfigError("CTC target must not contain the blank label")

    @property
    def expanded(self) -> np.ndarray:
        ext = np.full(2 * len(self.labels) + 1, self.blank, dtype=np.int64)
        ext[1::2] = self.labels
        return ext

    @property
    def required_frames(self) -> int:
        return required_frames(self.labels)


@dataclass
class PathPosterior:
    """alpha[t, s] = log tổng xác suất các tiền tố đường đi kết thúc ở trạng thái s tại frame t."""

    alpha: np.ndarray

    @property
    def log_likelihood(self) -> float:
        last = self.alpha[-1]
        if last.shape[0] == 1:
            return float(last[0])
        return float(np.logaddexp(last[-1], last[-2]))


def _as_targets(targets: Sequence[Union[Sequence[int], CtcTarget]], blank: int) -> List[CtcTarget]:
    return [t if isinstance(t, CtcTarget) else CtcTarget(tuple(t), blank) for t in targets]


def _forward_lattice(
    log_probs: Tensor,
    input_lengths: np.ndarray,
    targets: List[CtcTarget],
    blank: int,
    keep_history: bool = False,
) -> Tuple[Tensor, List[np.ndarray]]:
    """
    Lattice batched: log_probs (B, T, C) -> log P(z_b | x_b) shape (B,).
    Frame vượt quá input_lengths[b] giữ nguyên alpha của utterance b.
    """
    batch, n_frames, n_classes = log_probs.shape
    s_lens = np.array([2 * len(t.labels) + 1 for t in targets], dtype=np.int64)
    s_max = int(s_lens.max())

    ext = np.full((batch, s_max), blank, dtype=np.int64)
    for b, target in enumerate(targets):
        ext[b, : s_lens[b]] = target.expanded
    if ext.max() >= n_classes:
        raise DimensionError(f"CTC label {int(ext.max())} out of range for {n_classes} classes")

    states = np.arange(s_max)[None, :]
    valid = states < s_lens[:, None]
    prev2 = np.concatenate([np.full((batch, 2), blank), ext[:, :-2]], axis=1)
    skip = (states >= 2) & (ext != blank) & (ext != prev2)

    # emit[b, t, s] = log p_t(z'_s)
    emit = getitem(
        log_probs,
        (np.arange(batch)[:, None, None], np.arange(n_frames)[None, :, None], ext[:, None, :]),
    )

    start = (states < 2) & valid
    alpha = where(start, getitem(emit, (slice(None), 0, slice(None))), NEG)
    history = [alpha.data.copy()] if keep_history else []

    for t in range(1, n_frames):
        stay = alpha
        step = pad(getitem(alpha, (slice(None), slice(0, s_max - 1))), ((0, 0), (1, 0)), NEG)
        if s_max >= 3:
            jump = pad(getitem(alpha, (slice(None), slice(0, s_max - 2))), ((0, 0), (2, 0)), NEG)
            jump = where(skip, jump, NEG)
        else:
            # mọi target rỗng: chỉ có trạng thái blank
            jump = as_tensor(np.full((batch, s_max), NEG))
        merged = logsumexp(stack([stay, step, jump], axis=0), axis=0)
        new = where(valid, merged + getitem(emit, (slice(None), t, slice(None))), NEG)
        active = (t < input_lengths)[:, None]
        alpha = where(active, new, alpha)
        if keep_history:
            history.append(alpha.data.copy())

    rows = np.arange(batch)
    last = getitem(alpha, (rows, s_lens - 1))
    second = getitem(alpha, (rows, np.maximum(s_lens - 2, 0)))
    second = where(s_lens >= 2, second, NEG)
    return logsumexp(stack([last, second], axis=1), axis=1), history


def _check_feasible(input_lengths: np.ndarray, targets: List[CtcTarget]) -> None:
    for n_frames, target in zip(input_lengths, targets):
        if n_frames < 1 or n_frames < target.required_frames:
            raise InfeasibleAlignmentError(int(n_frames), target.required_frames, len(target.labels))


def ctc_loss_batch(
    log_probs: Tensor,
    input_lengths: Sequence[int],
    targets: Sequence[Union[Sequence[int], CtcTarget]],
    reduction: str = "frame_mean",
    blank: int = BLANK,
) -> Tensor:
    """
    log_probs: (B, T, C) log-softmax theo trục cuối.
    reduction: none -> (B,), sum, mean (theo batch), frame_mean (chia T_b rồi lấy trung bình batch).
    """
    if reduction not in REDUCTIONS:
        raise ConfigError(f"Unknown CTC reduction {reduction!r}; expected one of {REDUCTIONS}")
    log_probs = as_tensor(log_probs)
    if log_probs.ndim != 3:
        raise DimensionError(f"ctc_loss_batch expects (B, T, C) log-probs, got {log_probs.shape}")
    input_lengths = np.asarray(input_lengths, dtype=np.int64)
    targets = _as_targets(targets, blank)
    if len(targets) != log_probs.shape[0] or input_lengths.shape[0] != log_probs.shape[0]:
        raise DimensionError(
            f"batch size mismatch: log_probs {log_probs.shape}, "
            f"{input_lengths.shape[0]} lengths, {len(targets)} targets"
        )
    if input_lengths.max() > log_probs.shape[1]:
        raise DimensionError(f"input length {input_lengths.max()} exceeds padded length {log_probs.shape[1]}")
    _check_feasible(input_lengths, targets)

    log_likelihood, _ = _forward_lattice(log_probs, input_lengths, targets, blank)
    losses = -log_likelihood
    if reduction == "none":
        return losses
    if reduction == "sum":
        return losses.sum()
    if reduction == "mean":
        return losses.mean()
    return (losses * (1.0 / input_lengths.astype(np.float64))).mean()


def ctc_loss(log_probs: Union[Tensor, np.ndarray], z: Sequence[int], blank: int = BLANK) -> Tensor:
    """-log P(z|x) cho một utterance, log_probs (T_x, V+1). Khả vi theo log_probs."""
    log_probs = as_tensor(log_probs)
    if log_probs.ndim != 2:
        raise DimensionError(f"ctc_loss expects (T, C) log-probs, got {log_probs.shape}")
    batched = log_probs.reshape((1,) + log_probs.shape)
    return ctc_loss_batch(batched, [log_probs.shape[0]], [z], reduction="sum", blank=blank)


def ctc_lattice(log_probs: Union[Tensor, np.ndarray], z: Sequence[int], blank: int = BLANK) -> PathPosterior:
    log_probs = as_tensor(log_probs)
    target = CtcTarget(tuple(z), blank)
    _check_feasible(np.array([log_probs.shape[0]]), [target])
    with no_grad():
        _, history = _forward_lattice(
            log_probs.reshape((1,) + log_probs.shape), np.array([log_probs.shape[0]]), [target], blank,
            keep_history=True,
        )
    s_len = 2 * len(target.labels) + 1
    return PathPosterior(alpha=np.stack([h[0, :s_len] for h in history], axis=0))
