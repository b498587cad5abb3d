"""
Suy luận: greedy và beam search trên decoder. Không dùng z hay teacher.

Quy ước:
  - max_len đếm số token sinh ra, kể cả <eos>
  - <pad> và <sos> không bao giờ được sinh
  - hoà điểm -> token id nhỏ nhất thắng
  - điểm cuối = log_prob / len^length_penalty (length_penalty = 0 -> log_prob thô)
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import no_grad
from src.data.vocab import Vocab
from src.model.lut_model import LutModel
from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

BANNED_SCORE = -np.inf


@dataclass
class DecodeConfig:
    beam: int = 8
    max_len: Optional[int] = None      # None -> model.cfg.max_st_len
    length_penalty: float = 0.6
    char_level: bool = False           # BLEU theo ký tự khi đánh giá

    def __post_init__(self):
        if self.beam < 1:
            raise ConfigError(f"decode.beam must be >= 1, got {self.beam}")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError("decode.max_len must be >= 1")
        if self.length_penalty < 0:
            raise ConfigError("decode.length_penalty must be >= 0")


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]     # token sinh ra, không gồm <sos>; kết thúc bằng <eos> nếu finished
    log_prob: float
    finished: bool

    def score(self, length_penalty: float) -> float:
        if length_penalty == 0 or not self.tokens:
            return self.log_prob
        return self.log_prob / (len(self.tokens) ** length_penalty)

    def content(self, eos_id: int) -> Tuple[int, ...]:
        return self.tokens[:-1] if self.finished and self.tokens and self.tokens[-1] == eos_id else self.tokens


def _resolve_max_len(model: LutModel, max_len: Optional[int]) -> int:
    limit = model.cfg.max_st_len
    if max_len is None:
        return limit
    if max_len > limit:
        raise ConfigError(f"max_len={max_len} exceeds model max_st_len={limit}")
    return max_len


def _masked_step(log_probs: np.ndarray, tgt_vocab: Vocab) -> np.ndarray:
    out = np.array(log_probs, dtype=np.float64, copy=True)
    out[..., tgt_vocab.pad_id] = BANNED_SCORE
    out[..., tgt_vocab.sos_id] = BANNED_SCORE
    return out


def _encode_memory(model: LutModel, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    out = model.encode(x[None], np.array([x.shape[0]]))
    return out.h_se


def greedy_translate(
    model: LutModel, x: np.ndarray, tgt_vocab: Vocab, max_len: Optional[int] = None
) -> List[int]:
    """argmax lặp từ <sos> tới <eos> hoặc max_len; trả về token nội dung (bỏ <eos>)."""
    max_len = _resolve_max_len(model, max_len)
    was_training = model.training
    model.eval()
    with no_grad():
        memory = _encode_memory(model, x)
        prefix = [tgt_vocab.sos_id]
        for _ in range(max_len):
            log_probs = model.decode_forward(np.array([prefix]), memory).data[0, -1]
            token = int(np.argmax(_masked_step(log_probs, tgt_vocab)))
            prefix.append(token)
            if token == tgt_vocab.eos_id:
                break
    model.train(was_training)
    generated = prefix[1:]
    return generated[:-1] if generated and generated[-1] == tgt_vocab.eos_id else generated


def beam_search(
    model: LutModel,
    x: np.ndarray,
    tgt_vocab: Vocab,
    beam: int = 8,
    max_len: Optional[int] = None,
    length_penalty: float = 0.6,
) -> Hypothesis:
    """
    Beam chuẩn: mỗi bước xếp mọi mở rộng theo tổng log-prob, giữ `beam` tốt nhất;
    mở rộng kết thúc bằng <eos> chuyển sang tập finished. Hết max_len mà chưa có
    <eos> thì giả thuyết vẫn được đưa vào cạnh tranh (finished=False).
    """
    if beam < 1:
        raise ConfigError(f"beam must be >= 1, got {beam}")
    max_len = _resolve_max_len(model, max_len)
    eos = tgt_vocab.eos_id
    was_training = model.training
    model.eval()

    finished: List[Hypothesis] = []
    active: List[Hypothesis] = [Hypothesis(tokens=(), log_prob=0.0, finished=False)]
    with no_grad():
        memory = _encode_memory(model, x)
        for _ in range(max_len):
            prefixes = np.array([(tgt_vocab.sos_id,) + h.tokens for h in active], dtype=np.int64)
            repeated = memory.data.repeat(len(active), axis=0)
            step = _masked_step(model.decode_forward(prefixes, repeated).data[:, -1], tgt_vocab)

            candidates = []
            for rank, hyp in enumerate(active):
                for token in np.flatnonzero(np.isfinite(step[rank])):
                    lp = float(step[rank, token])
                    candidates.append((-(hyp.log_prob + lp), rank, -lp, int(token)))
            candidates.sort()

            next_active = []
            for neg_total, rank, _, token in candidates[:beam]:
                hyp = Hypothesis(active[rank].tokens + (token,), -neg_total, token == eos)
                (finished if hyp.finished else next_active).append(hyp)
            active = next_active
            if not active:
                break
    model.train(was_training)

    pool = finished + active
    return min(pool, key=lambda h: (-h.score(length_penalty), h.tokens))


def translate(
    model: LutModel,
    x: np.ndarray,
    tgt_vocab: Vocab,
    cfg: Optional[DecodeConfig] = None,
) -> List[int]:
    cfg = cfg or DecodeConfig()
    if cfg.beam == 1:
        return greedy_translate(model, x, tgt_vocab, cfg.max_len)
    hyp = beam_search(model, x, tgt_vocab, cfg.beam, cfg.max_len, cfg.length_penalty)
    return list(hyp.content(tgt_vocab.eos_id))


def translate_all(
    model: LutModel, features: Sequence[np.ndarray], tgt_vocab: Vocab, cfg: Optional[DecodeConfig] = None
) -> List[List[int]]:
    cfg = cfg or DecodeConfig()
    outputs = [translate(model, x, tgt_vocab, cfg) for x in features]
    logger.info("Decoded %d utterances (beam=%d)", len(outputs), cfg.beam)
    return outputs
