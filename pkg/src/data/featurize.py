"""
Tiền xử lý frame: ghép 5 frame bên phải, giảm mẫu 3 lần, chuẩn hoá
mean/variance theo thống kê của tập train.

Thứ tự: stack trước, rồi lấy mỗi frame thứ 3 của chuỗi đã stack.
Mép phải được đệm bằng cách lặp lại frame cuối.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.data.utterance import Utterance
from src.utils.errors import ConfigError, EmptyInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)

NORM_EPS = 1e-5


@dataclass
class FeatureConfig:
    stack_right: int = 5
    downsample: int = 3
    normalize: bool = True

    def __post_init__(self):
        if self.stack_right < 0:
            raise ConfigError("features.stack_right must be >= 0")
        if self.downsample < 1:
            raise ConfigError("features.downsample must be >= 1")

    def output_dim(self, raw_dim: int) -> int:
        return (self.stack_right + 1) * raw_dim


def stack_frames(raw: np.ndarray, stack_right: int) -> np.ndarray:
    """frame t -> [x_t, x_{t+1}, ..., x_{t+stack_right}], chỉ số vượt biên kẹp về T-1."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise EmptyInputError(f"stack_frames needs a non-empty (T, F) array, got {raw.shape}")
    n = raw.shape[0]
    idx = np.minimum(np.arange(n)[:, None] + np.arange(stack_right + 1)[None, :], n - 1)
    return raw[idx].reshape(n, -1)


def downsample_frames(frames: np.ndarray, factor: int) -> np.ndarray:
    return frames[::factor]


class FeatureNormalizer:
    """Mean subtraction + variance normalization theo từng toạ độ."""

    def __init__(self, mean: np.ndarray, var: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = np.asarray(var, dtype=np.float64)

    @classmethod
    def fit(cls, frame_sets: Sequence[np.ndarray]) -> "FeatureNormalizer":
        if not frame_sets:
            raise EmptyInputError("Cannot fit normalizer on an empty corpus")
        stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in frame_sets], axis=0)
        return cls(stacked.mean(axis=0), stacked.var(axis=0))

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        # phương sai 0 -> epsilon: đầu ra bằng 0 thay vì chia cho 0
        return (frames - self.mean) / np.sqrt(self.var + NORM_EPS)

    def to_arrays(self) -> dict:
        return {"featurizer.mean": self.mean, "featurizer.var": self.var}

    @classmethod
    def from_arrays(cls, arrays: dict) -> "FeatureNormalizer":
        return cls(arrays["featurizer.mean"], arrays["featurizer.var"])


def featurize(
    raw: np.ndarray,
    stack_right: int = 5,
    downsample: int = 3,
    normalizer: Optional[FeatureNormalizer] = None,
    normalize: bool = False,
) -> np.ndarray:
    """
    Độ dài đầu ra = ceil(T_raw / downsample), độ rộng = (stack_right + 1) * F0.
    normalize=True mà không có normalizer: chuẩn hoá theo chính utterance này.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise EmptyInputError("featurize received an empty frame sequence")
    out = downsample_frames(stack_frames(raw, stack_right), downsample)
    if normalizer is None and normalize:
        normalizer = FeatureNormalizer.fit([out])
    return normalizer(out) if normalizer is not None else out


def featurize_corpus(
    train: Sequence[Utterance],
    cfg: FeatureConfig,
    normalizer: Optional[FeatureNormalizer] = None,
    others: Sequence[Sequence[Utterance]] = (),
) -> Tuple[List[Utterance], List[List[Utterance]], Optional[FeatureNormalizer]]:
    """
    Stack + downsample mọi tập; nếu cfg.normalize thì fit normalizer trên train
    (khi chưa truyền vào) và áp dụng cho tất cả.
    """
    def _raw(utts):
        return [featurize(u.features, cfg.stack_right, cfg.downsample) for u in utts]

    train_feats = _raw(train)
    other_feats = [_raw(group) for group in others]

    if cfg.normalize and normalizer is None:
        normalizer = FeatureNormalizer.fit(train_feats)
    if not cfg.normalize:
        normalizer = None

    def _apply(utts, feats):
        if normalizer is not None:
            feats = [normalizer(f) for f in feats]
        return [u.with_features(f) for u, f in zip(utts, feats)]

    new_train = _apply(train, train_feats)
    new_others = [_apply(group, feats) for group, feats in zip(others, other_feats)]
    logger.info(
        "Featurized %d train utterances (+%d other sets): stack_right=%d downsample=%d normalize=%s",
        len(new_train), len(new_others), cfg.stack_right, cfg.downsample, cfg.normalize,
    )
    return new_train, new_others, normalizer
