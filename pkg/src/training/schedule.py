"""
Lịch learning rate warmup-decay: tăng tuyến tính 0 -> peak trong warmup_steps,
sau đó giảm bậc thang x decay_rate mỗi decay_steps bước.
"""
import math
from dataclasses import dataclass

from src.utils.errors import ConfigError, UsageError


@dataclass
class Schedule:
    peak_lr: float = 4e-4
    warmup_steps: int = 500      # 25k ở quy mô thật
    decay_rate: float = 0.5
    decay_steps: int = 1000      # 50k ở quy mô thật

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ConfigError("schedule.peak_lr must be > 0")
        if self.warmup_steps < 0:
            raise ConfigError("schedule.warmup_steps must be >= 0")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigError("schedule.decay_rate must be in (0, 1]")
        if self.decay_steps < 1:
            raise ConfigError("schedule.decay_steps must be >= 1")


def lr_at(step: int, schedule: Schedule) -> float:
    if step < 1:
        raise UsageError(f"lr_at expects step >= 1, got {step}")
    if step <= schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    n_decays = math.floor((step - schedule.warmup_steps) / schedule.decay_steps)
    return schedule.peak_lr * schedule.decay_rate ** n_decays
