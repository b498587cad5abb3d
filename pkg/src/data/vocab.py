"""
Từ điển token với các mục dành riêng. Phía nguồn có thêm blank của CTC (id 0).

File vocab: mỗi dòng một token, số dòng (bắt đầu từ 0) = id.
"""
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from src.utils.errors import ConfigError

BLANK = "<blk>"
PAD = "<pad>"
SOS = "<sos>"
EOS = "<eos>"
UNK = "<unk>"

SOURCE_SPECIALS = (BLANK, PAD, SOS, EOS, UNK)
TARGET_SPECIALS = (PAD, SOS, EOS, UNK)


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise ConfigError("Vocabulary contains duplicate tokens")
        if UNK not in tokens:
            raise ConfigError("Vocabulary must contain <unk>")
        if BLANK in tokens and tokens.index(BLANK) != 0:
            raise ConfigError("Blank symbol must have id 0")
        self.tokens: List[str] = tokens
        self._index: Dict[str, int] = {tok: i for i, tok in enumerate(tokens)}

    @classmethod
    def build(cls, content: Iterable[str], side: str) -> "Vocab":
        if side == "source":
            specials = SOURCE_SPECIALS
        elif side == "target":
            specials = TARGET_SPECIALS
        else:
            raise ConfigError(f"Unknown vocab side: {side}")
        return cls(list(specials) + [tok for tok in content if tok not in specials])

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    @property
    def has_blank(self) -> bool:
        return BLANK in self._index

    @property
    def blank_id(self) -> int:
        return self._index[BLANK]

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def sos_id(self) -> int:
        return self._index[SOS]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    @property
    def special_ids(self) -> List[int]:
        return [i for i, tok in enumerate(self.tokens) if tok.startswith("<") and tok.endswith(">")]

    @property
    def content_ids(self) -> List[int]:
        special = set(self.special_ids)
        return [i for i in range(len(self.tokens)) if i not in special]

    def token_to_id(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def id_to_token(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.token_to_id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]

    # --- nhãn CTC: blank + <unk> + token nội dung; <pad>/<sos>/<eos> bị loại ---
    def ctc_label_ids(self) -> np.ndarray:
        if not self.has_blank:
            raise ConfigError("CTC labels need a source vocabulary with a blank symbol")
        excluded = {self.pad_id, self.sos_id, self.eos_id, self.blank_id}
        rest = [i for i in range(len(self.tokens)) if i not in excluded]
        return np.array([self.blank_id] + rest, dtype=np.int64)

    def to_ctc(self, ids: Sequence[int]) -> List[int]:
        lookup = {vid: cid for cid, vid in enumerate(self.ctc_label_ids())}
        try:
            return [lookup[i] for i in ids]
        except KeyError as exc:
            raise ConfigError(f"Token id {exc.args[0]} has no CTC label") from exc

    def from_ctc(self, labels: Sequence[int]) -> List[int]:
        table = self.ctc_label_ids()
        return [int(table[c]) for c in labels]

    # --- IO ---
    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocab":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Vocab file not found: {path}")
        lines = path.read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line != ""])
