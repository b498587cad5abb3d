"""
Gom utterance thành batch theo ngân sách frame (bucket theo độ dài xấp xỉ),
pad và dựng mask.
"""
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from src.ctc.ctc_loss import required_frames
from src.core.functional import length_mask
from src.data.spec_augment import AugmentConfig, spec_augment
from src.data.utterance import KIND_ASR, KIND_ST, Utterance
from src.data.vocab import Vocab
from src.utils.errors import ConfigError, EmptyInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class Batch:
    utt_ids: List[str]
    features: np.ndarray            # (B, T_max, F), vị trí pad = 0
    frame_lengths: np.ndarray       # (B,)
    z: List[tuple]                  # id nguồn, không pad
    z_lengths: np.ndarray
    ctc_targets: List[List[int]]    # z đổi sang nhãn CTC
    y_in: Optional[np.ndarray]      # (B, L) = <sos> + y, pad bằng <pad>
    y_out: Optional[np.ndarray]     # (B, L) = y + <eos>, pad bằng <pad>
    y_lengths: Optional[np.ndarray] # số token của y_out (gồm <eos>)
    speaker_ids: np.ndarray
    intent_ids: np.ndarray
    kind: str

    @property
    def size(self) -> int:
        return len(self.utt_ids)

    @property
    def n_frames(self) -> int:
        return int(self.frame_lengths.sum())

    @property
    def frame_mask(self) -> np.ndarray:
        return length_mask(self.frame_lengths, self.features.shape[1])

    @property
    def y_mask(self) -> Optional[np.ndarray]:
        if self.y_out is None:
            return None
        return length_mask(self.y_lengths, self.y_out.shape[1])

    @property
    def has_translation(self) -> bool:
        return self.y_out is not None


def filter_feasible(utterances: Sequence[Utterance], src_vocab: Vocab) -> List[Utterance]:
    """Loại utterance không có alignment CTC (T_x quá ngắn so với z); log cảnh báo."""
    kept = []
    for utt in utterances:
        need = required_frames(src_vocab.to_ctc(utt.z))
        if utt.n_frames < need:
            logger.warning(
                "Drop %s: %d frames < %d required for CTC alignment", utt.utt_id, utt.n_frames, need
            )
            continue
        kept.append(utt)
    return kept


def make_batches(
    utterances: Sequence[Utterance], frames_budget: int, seed: int, shuffle: bool = True
) -> List[List[Utterance]]:
    """
    Sắp theo độ dài, gom tham lam sao cho tổng frame chưa pad <= frames_budget,
    rồi xáo thứ tự batch theo seed. Mỗi utterance xuất hiện đúng một lần.
    """
    if not utterances:
        return []
    longest = max(u.n_frames for u in utterances)
    if longest > frames_budget:
        raise ConfigError(
            f"frames_budget={frames_budget} is smaller than the longest utterance ({longest} frames)"
        )

    ordered = sorted(utterances, key=lambda u: (u.n_frames, u.utt_id))
    batches: List[List[Utterance]] = []
    current: List[Utterance] = []
    used = 0
    for utt in ordered:
        if current and used + utt.n_frames > frames_budget:
            batches.append(current)
            current, used = [], 0
        current.append(utt)
        used += utt.n_frames
    if current:
        batches.append(current)

    if shuffle:
        order = np.random.default_rng(seed).permutation(len(batches))
        batches = [batches[i] for i in order]
    return batches


def iterate_batches(
    utterances: Sequence[Utterance], frames_budget: int, seed: int
) -> Iterator[List[Utterance]]:
    """Dòng batch vô hạn; epoch e xáo bằng seed + e."""
    if not utterances:
        raise EmptyInputError("Cannot iterate batches over an empty set")
    epoch = 0
    while True:
        for group in make_batches(utterances, frames_budget, seed + epoch):
            yield group
        epoch += 1


def collate(
    utterances: Sequence[Utterance],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    augment: Optional[AugmentConfig] = None,
    rng: Optional[np.random.Generator] = None,
    drop_translation: bool = False,
) -> Batch:
    """drop_translation=True: coi batch như ASR-pair (Step 1 của chiến lược bán giám sát)."""
    if not utterances:
        raise EmptyInputError("Cannot collate an empty batch")
    feats = [u.features for u in utterances]
    if augment is not None and augment.enabled:
        rng = rng if rng is not None else np.random.default_rng(0)
        feats = [spec_augment(f, augment, rng=rng) for f in feats]

    batch_size = len(utterances)
    frame_lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    dim = feats[0].shape[1]
    features = np.zeros((batch_size, int(frame_lengths.max()), dim), dtype=np.float64)
    for i, f in enumerate(feats):
        features[i, : f.shape[0]] = f

    has_y = not drop_translation and all(u.y is not None for u in utterances)
    y_in = y_out = y_lengths = None
    if has_y:
        y_lengths = np.array([len(u.y) + 1 for u in utterances], dtype=np.int64)
        width = int(y_lengths.max())
        y_in = np.full((batch_size, width), tgt_vocab.pad_id, dtype=np.int64)
        y_out = np.full((batch_size, width), tgt_vocab.pad_id, dtype=np.int64)
        for i, u in enumerate(utterances):
            y_in[i, : len(u.y) + 1] = (tgt_vocab.sos_id,) + u.y
            y_out[i, : len(u.y) + 1] = u.y + (tgt_vocab.eos_id,)

    return Batch(
        utt_ids=[u.utt_id for u in utterances],
        features=features,
        frame_lengths=frame_lengths,
        z=[u.z for u in utterances],
        z_lengths=np.array([len(u.z) for u in utterances], dtype=np.int64),
        ctc_targets=[src_vocab.to_ctc(u.z) for u in utterances],
        y_in=y_in,
        y_out=y_out,
        y_lengths=y_lengths,
        speaker_ids=np.array([u.speaker_id for u in utterances], dtype=np.int64),
        intent_ids=np.array([u.intent_id for u in utterances], dtype=np.int64),
        kind=KIND_ST if has_y else KIND_ASR,
    )
