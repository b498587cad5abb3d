from dataclasses import asdict, dataclass
from typing import Tuple

from src.utils.errors import ConfigError

BRANCH_MODES = ("seq", "word")


@dataclass
class ModelConfig:
    """
    Siêu tham số kiến trúc + trọng số loss L = alpha*L_ae + beta*L_se + gamma*L_td.
    input_dim / n_ctc_labels / tgt_vocab_size được điền từ dữ liệu khi dựng model.
    """

    n_ae: int = 2
    n_se: int = 2
    n_td: int = 2
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 64
    input_dim: int = 0
    n_ctc_labels: int = 0
    tgt_vocab_size: int = 0
    alpha: float = 0.5
    beta: float = 0.05
    gamma: float = 0.45
    branch: str = "word"
    dropout: float = 0.1
    label_smoothing: float = 0.0
    max_asr_len: int = 200
    max_st_len: int = 250
    conv_kernel: Tuple[int, int] = (3, 3)
    conv_stride: Tuple[int, int] = (1, 2)
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"model.{name} must be >= 0, got {getattr(self, name)}")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} must be divisible by n_heads={self.n_heads}")
        if min(self.n_ae, self.n_se, self.n_td) < 0:
            raise ConfigError("layer counts must be >= 0")
        if self.branch not in BRANCH_MODES:
            raise ConfigError(f"model.branch must be one of {BRANCH_MODES}, got {self.branch!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout must be in [0, 1)")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("model.label_smoothing must be in [0, 1)")
        if self.max_st_len < 1 or self.max_asr_len < 1:
            raise ConfigError("max decode lengths must be >= 1")
        self.conv_kernel = tuple(int(k) for k in self.conv_kernel)
        self.conv_stride = tuple(int(s) for s in self.conv_stride)
        if len(self.conv_kernel) != 2 or len(self.conv_stride) != 2 or min(self.conv_kernel + self.conv_stride) < 1:
            raise ConfigError("conv_kernel and conv_stride must be pairs of positive integers")

    @property
    def weights(self) -> Tuple[float, float, float]:
        return self.alpha, self.beta, self.gamma

    def shape_payload(self) -> dict:
        """Các trường quyết định shape tham số -> dùng cho config_hash."""
        payload = asdict(self)
        # cả hai nhánh luôn có tham số nên branch không đổi shape
        for key in ("alpha", "beta", "gamma", "branch", "dropout", "label_smoothing",
                    "max_asr_len", "max_st_len", "seed"):
            payload.pop(key)
        return payload
