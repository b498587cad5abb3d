"""
So gradient từ backward() với sai phân trung tâm (f(x+h e_i) - f(x-h e_i)) / 2h.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import Tensor, backward
from src.utils.logger import get_logger

logger = get_logger(__name__)

# mẫu số nhỏ nhất khi tính sai số tương đối (tránh chia cho gradient ~0)
REL_ERROR_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    rel_errors: Dict[str, np.ndarray] = field(default_factory=dict)
    flagged: List[Tuple[str, Tuple[int, ...]]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flagged


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    analytic: Optional[Sequence[np.ndarray]] = None,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    f() phải tất định ở tham số cố định và trả về loss vô hướng.
    analytic: gradient cho sẵn (bỏ qua backward) - dùng cho đối chứng âm.
    max_coords: chỉ kiểm tra ngẫu nhiên tối đa chừng đó toạ độ mỗi tham số.
    """
    if analytic is None:
        for p in params:
            p.grad = None
        backward(f())
        analytic = [
            np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True)
            for p in params
        ]

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tol=tol)

    for idx_param, (p, grad) in enumerate(zip(params, analytic)):
        name = p.name or f"param[{idx_param}]"
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

        numeric = np.zeros(coords.size)
        for j, i in enumerate(coords):
            original = flat[i]
            flat[i] = original + h
            f_plus = f().item()
            flat[i] = original - h
            f_minus = f().item()
            flat[i] = original
            numeric[j] = (f_plus - f_minus) / (2.0 * h)

        rel = relative_error(np.asarray(grad).reshape(-1)[coords], numeric)
        report.rel_errors[name] = rel
        if rel.size:
            report.max_rel_error = max(report.max_rel_error, float(rel.max()))
        for j in np.nonzero(rel > tol)[0]:
            report.flagged.append((name, np.unravel_index(coords[j], p.shape)))

    if report.flagged:
        logger.warning(
            "Gradient check flagged %d coordinates (max rel err %.3e > tol %.1e)",
            len(report.flagged), report.max_rel_error, tol,
        )
    return report
