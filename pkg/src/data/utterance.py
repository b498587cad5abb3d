from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from src.data.vocab import Vocab
from src.utils.errors import DimensionError, EmptyInputError

KIND_ST = "st"
KIND_ASR = "asr"


@dataclass
class Utterance:
    """
    Một mẫu huấn luyện: (x, z, y) cho ST-triple, (x, z) cho ASR-pair.
    z, y là id token nội dung (không có blank/pad/<sos>/<eos>).
    """

    utt_id: str
    features: np.ndarray
    z: Tuple[int, ...]
    y: Optional[Tuple[int, ...]]
    speaker_id: int = 0
    intent_id: int = 0
    kind: str = KIND_ST

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionError(f"{self.utt_id}: features must be (T, F), got {self.features.shape}")
        if self.features.shape[0] < 1:
            raise EmptyInputError(f"{self.utt_id}: utterance has no frames")
        self.z = tuple(int(t) for t in self.z)
        if self.y is not None:
            self.y = tuple(int(t) for t in self.y)
        if self.kind == KIND_ASR and self.y is not None:
            raise ValueError(f"{self.utt_id}: ASR-pair utterance must not carry a translation")
        if self.kind == KIND_ST and self.y is None:
            raise ValueError(f"{self.utt_id}: ST-triple utterance needs a translation")

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def with_features(self, features: np.ndarray) -> "Utterance":
        return replace(self, features=features)

    def validate_tokens(self, src_vocab: Vocab, tgt_vocab: Optional[Vocab] = None) -> None:
        bad_src = set(src_vocab.special_ids) - {src_vocab.unk_id}
        if any(t in bad_src for t in self.z):
            raise ValueError(f"{self.utt_id}: z contains blank/pad/boundary symbols")
        if self.y is not None and tgt_vocab is not None and tgt_vocab.pad_id in self.y:
            raise ValueError(f"{self.utt_id}: y contains <pad>")


@dataclass
class Corpus:
    utterances: List[Utterance]
    src_vocab: Vocab
    tgt_vocab: Vocab
    prototypes: Optional[np.ndarray] = None
    speaker_offsets: Optional[np.ndarray] = None
    asr_utterances: List[Utterance] = field(default_factory=list)

    @property
    def feature_dim(self) -> int:
        return self.utterances[0].feature_dim if self.utterances else 0
