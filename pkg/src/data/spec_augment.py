"""
SpecAugment: che tối đa m_F dải tần (độ rộng <= F) và m_T đoạn thời gian
(độ rộng <= T) bằng 0. Chỉ dùng khi train.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.utils.errors import ConfigError


@dataclass
class AugmentConfig:
    enabled: bool = True
    freq_max_width: int = 2      # F = 30 ở độ rộng feature thật
    freq_masks: int = 2          # m_F
    time_max_width: int = 6      # T = 40 ở tốc độ frame thật
    time_masks: int = 2          # m_T

    def __post_init__(self):
        for name in ("freq_max_width", "freq_masks", "time_max_width", "time_masks"):
            if getattr(self, name) < 0:
                raise ConfigError(f"augment.{name} must be >= 0")


def draw_masks(
    n_frames: int, n_features: int, cfg: AugmentConfig, rng: np.random.Generator
) -> Tuple[list, list]:
    """Trả về danh sách (start, width) cho dải tần và đoạn thời gian; đã kẹp trong biên."""
    bands, spans = [], []
    for _ in range(cfg.freq_masks):
        width = min(int(rng.integers(0, cfg.freq_max_width + 1)), n_features)
        start = int(rng.integers(0, n_features - width + 1))
        if width > 0:
            bands.append((start, width))
    for _ in range(cfg.time_masks):
        width = min(int(rng.integers(0, cfg.time_max_width + 1)), n_frames)
        start = int(rng.integers(0, n_frames - width + 1))
        if width > 0:
            spans.append((start, width))
    return bands, spans


def spec_augment(
    x: np.ndarray,
    cfg: AugmentConfig,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Trả về bản sao; ô ngoài mask giữ nguyên giá trị."""
    x = np.asarray(x)
    if not cfg.enabled:
        return x.copy()
    rng = rng if rng is not None else np.random.default_rng(seed)
    bands, spans = draw_masks(x.shape[0], x.shape[1], cfg, rng)
    out = x.copy()
    for start, width in bands:
        out[:, start:start + width] = 0.0
    for start, width in spans:
        out[start:start + width, :] = 0.0
    return out
