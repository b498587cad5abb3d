"""
Adam (beta1=0.9, beta2=0.999, eps=1e-8) có bias correction, cộng clip theo
global norm. Tham số có grad=None (không nằm trong graph của bước này) bị bỏ qua.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import Parameter
from src.utils.errors import ConfigError, NonFiniteGradientError, UsageError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[int, np.ndarray] = field(default_factory=dict)
    v: Dict[int, np.ndarray] = field(default_factory=dict)
    counts: Dict[int, int] = field(default_factory=dict)


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Parameter], max_norm: Optional[float]) -> float:
    """Scale mọi grad khi global norm > max_norm; trả về norm trước khi clip."""
    norm = global_grad_norm(params)
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def check_finite_grads(named_params: Sequence[Tuple[str, Parameter]]) -> None:
    bad = [name for name, p in named_params if p.grad is not None and not np.all(np.isfinite(p.grad))]
    if bad:
        raise NonFiniteGradientError(bad)


class Adam:
    def __init__(
        self,
        named_params: Sequence[Tuple[str, Parameter]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: Optional[float] = None,
    ):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigError(f"Adam betas must be in [0, 1), got ({beta1}, {beta2})")
        self.named_params: List[Tuple[str, Parameter]] = [
            (name, p) for name, p in named_params if p.requires_grad
        ]
        self.state = OptimizerState(beta1=beta1, beta2=beta2, eps=eps)
        self.clip_norm = clip_norm

    @property
    def params(self) -> List[Parameter]:
        return [p for _, p in self.named_params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> float:
        """
        Một bước cập nhật. Grad không hữu hạn -> NonFiniteGradientError, không
        tham số nào bị đổi. Trả về global norm trước khi clip.
        """
        if lr <= 0:
            raise UsageError(f"learning rate must be > 0, got {lr}")
        check_finite_grads(self.named_params)
        norm = clip_grad_norm(self.params, self.clip_norm)

        st = self.state
        st.step += 1
        for _, p in self.named_params:
            if p.grad is None:
                continue
            key = id(p)
            if key not in st.m:
                st.m[key] = np.zeros_like(p.data)
                st.v[key] = np.zeros_like(p.data)
                st.counts[key] = 0
            st.counts[key] += 1
            t = st.counts[key]
            g = p.grad
            st.m[key] = st.beta1 * st.m[key] + (1.0 - st.beta1) * g
            st.v[key] = st.beta2 * st.v[key] + (1.0 - st.beta2) * g * g
            m_hat = st.m[key] / (1.0 - st.beta1 ** t)
            v_hat = st.v[key] / (1.0 - st.beta2 ** t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + st.eps)
        return norm

    def moments(self, param: Parameter) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        return self.state.m.get(id(param)), self.state.v.get(id(param))
