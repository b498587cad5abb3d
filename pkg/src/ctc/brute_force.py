"""
Oracle liệt kê toàn bộ đường đi thô (chỉ dùng cho kiểm thử, không gian nhỏ).
"""
import itertools
import math
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from src.core.tensor import Tensor
from src.ctc.ctc_loss import BLANK, collapse
from src.utils.errors import DimensionError, SearchSpaceError

MAX_PATHS = 10 ** 7


def _as_array(log_probs: Union[Tensor, np.ndarray]) -> np.ndarray:
    arr = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected (T, C) log-probs, got {arr.shape}")
    return arr


def ctc_path_distribution(
    log_probs: Union[Tensor, np.ndarray], blank: int = BLANK, max_paths: int = MAX_PATHS
) -> Dict[Tuple[int, ...], float]:
    """z -> log P(z|x), cộng dồn trên mọi đường đi có collapse(pi) = z."""
    arr = _as_array(log_probs)
    n_frames, n_classes = arr.shape
    n_paths = n_classes ** n_frames
    if n_paths > max_paths:
        raise SearchSpaceError(
            f"{n_classes}^{n_frames} = {n_paths} raw paths exceeds the limit of {max_paths}"
        )

    paths = np.array(list(itertools.product(range(n_classes), repeat=n_frames)), dtype=np.int64)
    path_scores = arr[np.arange(n_frames)[None, :], paths].sum(axis=1)

    dist: Dict[Tuple[int, ...], float] = {}
    for path, score in zip(paths, path_scores):
        key = tuple(collapse(path, blank))
        dist[key] = float(np.logaddexp(dist[key], score)) if key in dist else float(score)
    return dist


def ctc_brute_force(
    log_probs: Union[Tensor, np.ndarray], z: Sequence[int], blank: int = BLANK, max_paths: int = MAX_PATHS
) -> float:
    """-log P(z|x) theo định nghĩa; +inf khi không đường nào collapse về z."""
    dist = ctc_path_distribution(log_probs, blank, max_paths)
    key = tuple(int(t) for t in z)
    return -dist[key] if key in dist else math.inf
