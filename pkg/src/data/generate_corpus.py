"""
Sinh corpus speech-translation tổng hợp (thay cho corpus thật ở quy mô bàn làm việc).

Mỗi token nguồn được "phát âm" thành k frame liên tiếp của một vector mẫu
(prototype) riêng của token, cộng offset hằng của người nói và nhiễu Gauss.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.data.utterance import KIND_ASR, KIND_ST, Corpus, Utterance
from src.data.vocab import Vocab
from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

TRANSLATION_RULES = ("copy-map", "reverse-map")


@dataclass
class CorpusSpec:
    n_src_tokens: int = 12
    n_tgt_tokens: int = 12
    n_utts: int = 2000
    n_asr_utts: int = 0
    min_len: int = 2
    max_len: int = 6
    frames_per_token: int = 3
    noise: float = 0.1
    feature_dim: int = 8
    n_speakers: int = 4
    speaker_offset_scale: float = 0.1
    n_intents: int = 4
    branch_prob: float = 0.15
    translation_rule: str = "reverse-map"
    dev_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_src_tokens", "n_tgt_tokens", "n_utts", "min_len", "frames_per_token",
                     "feature_dim", "n_speakers", "n_intents"):
            if getattr(self, name) < 1:
                raise ConfigError(f"data.{name} must be >= 1, got {getattr(self, name)}")
        if self.max_len < self.min_len:
            raise ConfigError(f"data.max_len ({self.max_len}) < data.min_len ({self.min_len})")
        if self.translation_rule not in TRANSLATION_RULES:
            raise ConfigError(f"data.translation_rule must be one of {TRANSLATION_RULES}")
        if self.noise < 0 or self.speaker_offset_scale < 0:
            raise ConfigError("data.noise and data.speaker_offset_scale must be >= 0")
        if not 0.0 <= self.branch_prob <= 1.0:
            raise ConfigError("data.branch_prob must be in [0, 1]")
        if self.n_asr_utts < 0:
            raise ConfigError("data.n_asr_utts must be >= 0")


def build_vocabs(spec: CorpusSpec) -> Tuple[Vocab, Vocab]:
    src = Vocab.build([f"s{i}" for i in range(spec.n_src_tokens)], side="source")
    tgt = Vocab.build([f"t{i}" for i in range(spec.n_tgt_tokens)], side="target")
    return src, tgt


def _token_map(spec: CorpusSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.n_tgt_tokens >= spec.n_src_tokens:
        return rng.permutation(spec.n_tgt_tokens)[: spec.n_src_tokens]
    return rng.integers(0, spec.n_tgt_tokens, size=spec.n_src_tokens)


def _sample_source(spec: CorpusSpec, rng: np.random.Generator, successor, alternative) -> List[int]:
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    seq = [int(rng.integers(0, spec.n_src_tokens))]
    for _ in range(length - 1):
        prev = seq[-1]
        nxt = alternative[prev] if rng.random() < spec.branch_prob else successor[prev]
        seq.append(int(nxt))
    return seq


def render_features(
    tokens: Sequence[int],
    prototypes: np.ndarray,
    offset: np.ndarray,
    frames_per_token: int,
    noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    frames = np.repeat(prototypes[np.asarray(tokens)], frames_per_token, axis=0) + offset
    if noise > 0:
        frames = frames + rng.normal(0.0, noise, size=frames.shape)
    return frames


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """
    Hàm thuần của (spec, seed). y = ánh xạ token tất định của z (đảo ngược
    với reverse-map); intent_id = hàm tất định của token đầu của z.
    """
    rng = np.random.default_rng(spec.seed)
    src_vocab, tgt_vocab = build_vocabs(spec)
    src_content = np.array(src_vocab.content_ids)
    tgt_content = np.array(tgt_vocab.content_ids)

    # --- tham số sinh dùng chung cho cả corpus ---
    prototypes = rng.normal(0.0, 1.0, size=(spec.n_src_tokens, spec.feature_dim))
    speaker_offsets = rng.normal(0.0, spec.speaker_offset_scale, size=(spec.n_speakers, spec.feature_dim))
    successor = rng.permutation(spec.n_src_tokens)
    alternative = rng.permutation(spec.n_src_tokens)
    token_map = _token_map(spec, rng)

    def _make(index: int, kind: str) -> Utterance:
        seq = _sample_source(spec, rng, successor, alternative)
        speaker = int(rng.integers(0, spec.n_speakers))
        feats = render_features(
            seq, prototypes, speaker_offsets[speaker], spec.frames_per_token, spec.noise, rng
        )
        y = None
        if kind == KIND_ST:
            mapped = [int(tgt_content[token_map[t]]) for t in seq]
            y = tuple(mapped[::-1] if spec.translation_rule == "reverse-map" else mapped)
        prefix = "utt" if kind == KIND_ST else "asr"
        return Utterance(
            utt_id=f"{prefix}-{index:05d}",
            features=feats,
            z=tuple(int(src_content[t]) for t in seq),
            y=y,
            speaker_id=speaker,
            intent_id=seq[0] % spec.n_intents,
            kind=kind,
        )

    utterances = [_make(i, KIND_ST) for i in range(spec.n_utts)]
    asr = [_make(i, KIND_ASR) for i in range(spec.n_asr_utts)]

    logger.info(
        "Generated corpus: %d ST triples, %d ASR pairs, vocab src=%d tgt=%d, rule=%s, seed=%d",
        len(utterances), len(asr), len(src_vocab), len(tgt_vocab), spec.translation_rule, spec.seed,
    )
    return Corpus(
        utterances=utterances,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        prototypes=prototypes,
        speaker_offsets=speaker_offsets,
        asr_utterances=asr,
    )


def split_corpus(
    utterances: Sequence[Utterance], dev_fraction: float, test_fraction: float, seed: int
) -> Tuple[List[Utterance], List[Utterance], List[Utterance]]:
    """Chia train/dev/test ngẫu nhiên theo seed; giữ thứ tự utt_id trong mỗi phần."""
    if dev_fraction < 0 or test_fraction < 0 or dev_fraction + test_fraction >= 1:
        raise ConfigError("dev_fraction + test_fraction must be in [0, 1)")
    n = len(utterances)
    order = np.random.default_rng(seed).permutation(n)
    n_dev = int(round(n * dev_fraction))
    n_test = int(round(n * test_fraction))
    dev_idx = set(order[:n_dev].tolist())
    test_idx = set(order[n_dev:n_dev + n_test].tolist())
    train = [u for i, u in enumerate(utterances) if i not in dev_idx and i not in test_idx]
    dev = [u for i, u in enumerate(utterances) if i in dev_idx]
    test = [u for i, u in enumerate(utterances) if i in test_idx]
    return train, dev, test
