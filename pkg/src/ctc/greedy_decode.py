from typing import List, Optional, Sequence, Union

import numpy as np

from src.core.tensor import Tensor
from src.ctc.ctc_loss import BLANK, collapse


def ctc_greedy_decode(log_probs: Union[Tensor, np.ndarray], blank: int = BLANK) -> List[int]:
    """argmax từng frame rồi collapse; np.argmax lấy id nhỏ nhất khi hoà."""
    arr = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    return collapse(np.argmax(arr, axis=-1), blank)


def ctc_greedy_decode_batch(
    log_probs: Union[Tensor, np.ndarray],
    lengths: Optional[Sequence[int]] = None,
    blank: int = BLANK,
) -> List[List[int]]:
    arr = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    lengths = [arr.shape[1]] * arr.shape[0] if lengths is None else lengths
    best = np.argmax(arr, axis=-1)
    return [collapse(best[b, : int(n)], blank) for b, n in enumerate(lengths)]
