"""
WER (edit distance, kernel numba), BLEU kiểu multi-bleu, BLEU câu add-1 và Pearson.
"""
import math
from collections import Counter
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np
from numba import njit

from src.utils.errors import EmptyInputError, UndefinedCorrelationError

MAX_ORDER = 4


@njit(cache=True)
def _edit_distance(ref: np.ndarray, hyp: np.ndarray) -> int:
    n, m = ref.shape[0], hyp.shape[0]
    prev = np.arange(m + 1)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        for j in range(m + 1):
            prev[j] = cur[j]
    return prev[m]


def _as_ids(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> Tuple[np.ndarray, np.ndarray]:
    index: Dict[Hashable, int] = {}
    ref_ids = np.array([index.setdefault(t, len(index)) for t in ref], dtype=np.int64)
    hyp_ids = np.array([index.setdefault(t, len(index)) for t in hyp], dtype=np.int64)
    return ref_ids, hyp_ids


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> int:
    """Số phép thay / chèn / xoá tối thiểu, chi phí đơn vị."""
    ref_ids, hyp_ids = _as_ids(ref, hyp)
    return int(_edit_distance(ref_ids, hyp_ids))


def wer(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> float:
    if len(ref) == 0:
        raise EmptyInputError("WER is undefined for an empty reference")
    return edit_distance(ref, hyp) / len(ref)


def corpus_wer(refs: Sequence[Sequence[Hashable]], hyps: Sequence[Sequence[Hashable]]) -> float:
    """Tổng edit / tổng độ dài tham chiếu."""
    if len(refs) != len(hyps):
        raise ValueError(f"corpus_wer: {len(refs)} references vs {len(hyps)} hypotheses")
    total = sum(len(r) for r in refs)
    if total == 0:
        raise EmptyInputError("corpus WER needs at least one reference token")
    return sum(edit_distance(r, h) for r, h in zip(refs, hyps)) / total


# --- BLEU ---

def _ngram_counts(tokens: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _to_chars(tokens: Sequence[Hashable]) -> List[str]:
    return list("".join(str(t) for t in tokens))


def bleu_stats(ref: Sequence[Hashable], hyp: Sequence[Hashable], max_n: int = MAX_ORDER) -> np.ndarray:
    """[len_hyp, len_ref, match_1, total_1, ..., match_n, total_n] (clip theo tham chiếu)."""
    stats = [len(hyp), len(ref)]
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        stats.append(sum(min(c, ref_counts[g]) for g, c in hyp_counts.items()))
        stats.append(max(len(hyp) - n + 1, 0))
    return np.array(stats, dtype=np.int64)


def _bleu_from_stats(stats: np.ndarray, max_n: int, smooth: bool) -> float:
    hyp_len, ref_len = int(stats[0]), int(stats[1])
    if hyp_len == 0:
        return 0.0
    log_precision = 0.0
    for n in range(max_n):
        match, total = int(stats[2 + 2 * n]), int(stats[3 + 2 * n])
        # add-1 cho n >= 2 (bậc 1 giữ nguyên)
        if smooth and n > 0:
            match, total = match + 1, total + 1
        if match == 0 or total == 0:
            return 0.0
        log_precision += math.log(match / total) / max_n
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def bleu(
    refs: Sequence[Sequence[Hashable]],
    hyps: Sequence[Sequence[Hashable]],
    max_n: int = MAX_ORDER,
    char_level: bool = False,
) -> float:
    """BLEU corpus 0..100: cộng dồn thống kê n-gram trên cả corpus rồi mới lấy trung bình nhân."""
    if len(refs) != len(hyps):
        raise ValueError(f"bleu: {len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise EmptyInputError("BLEU is undefined for an empty corpus")
    if char_level:
        refs, hyps = [_to_chars(r) for r in refs], [_to_chars(h) for h in hyps]
    totals = sum(bleu_stats(r, h, max_n) for r, h in zip(refs, hyps))
    return _bleu_from_stats(totals, max_n, smooth=False)


def sentence_bleu(
    ref: Sequence[Hashable], hyp: Sequence[Hashable], max_n: int = MAX_ORDER, char_level: bool = False
) -> float:
    """
    BLEU một câu, làm mịn add-1 cho bậc >= 2 (dùng cho scatter WER-BLEU).

    Bậc n mà hypothesis quá ngắn để có n-gram nào cho precision (0+1)/(0+1) = 1,
    nên câu ngắn mà đúng chỉ còn bị phạt qua brevity penalty: hyp "a" với
    ref "a b c d" cho 100 * exp(1 - 4). Đây là cách làm mịn add-1 thông dụng
    cho sentence BLEU; BLEU corpus không làm mịn.
    """
    if char_level:
        ref, hyp = _to_chars(ref), _to_chars(hyp)
    return _bleu_from_stats(bleu_stats(ref, hyp, max_n), max_n, smooth=True)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two 1-D sequences of equal length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise UndefinedCorrelationError(f"pearson needs at least 2 points, got {x.size}")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = float(np.sqrt(np.dot(dx, dx))), float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("pearson is undefined when an input is constant")
    r = float(np.dot(dx, dy)) / (sx * sy)
    return max(-1.0, min(1.0, r))
