"""
Teacher đóng băng thay cho BERT: cho mỗi bản ghi z một vector lớp h_c và
ma trận per-token (T_z x d_model).

Hai chế độ:
  - trained: encoder Transformer nhỏ, token [CLS] học được đặt trước chuỗi,
    huấn luyện bằng masked-token prediction (xem train_teacher.py)
  - table:   bảng Gauss cố định theo seed, h_c = trung bình các hàng
"""
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core import functional as F
from src.core.layers import Embedding, EncoderLayer, Linear, Module
from src.core.tensor import Parameter, Tensor, concat, getitem, no_grad, reshape, where
from src.data.vocab import Vocab
from src.utils.checkpoint_utils import load_container, save_container
from src.utils.errors import CheckpointError, ConfigError, EmptyInputError, FrozenModelError
from src.utils.logger import get_logger

logger = get_logger(__name__)

TEACHER_MODES = ("trained", "table")
TEACHER_TAG = "teacher"


@dataclass
class TeacherConfig:
    mode: str = "trained"
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    dropout: float = 0.1
    mask_prob: float = 0.15
    steps: int = 3000
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_steps: int = 200
    eval_interval: int = 500
    heldout_fraction: float = 0.1
    target_layer: int = -1       # -1 = lớp cuối; 0 = đầu vào đã nhúng
    table_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TEACHER_MODES:
            raise ConfigError(f"teacher.mode must be one of {TEACHER_MODES}, got {self.mode!r}")
        if self.n_layers < 0 or self.n_heads < 1:
            raise ConfigError("teacher.n_layers must be >= 0 and teacher.n_heads >= 1")
        if not 0.0 < self.mask_prob < 1.0:
            raise ConfigError("teacher.mask_prob must be in (0, 1)")
        if not -1 <= self.target_layer <= self.n_layers:
            raise ConfigError(
                f"teacher.target_layer={self.target_layer} outside [-1, {self.n_layers}]"
            )


@dataclass
class TeacherEmbedding:
    h_c: np.ndarray          # (d_model,)
    per_token: np.ndarray    # (T_z, d_model)

    @property
    def length(self) -> int:
        return int(self.per_token.shape[0])


class TeacherModel(Module):
    def __init__(self, vocab: Vocab, d_model: int, cfg: TeacherConfig):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.vocab = vocab
        self.d_model = d_model
        self.mode = cfg.mode
        self.frozen = False
        self._rng = rng
        self._cache = {}
        if cfg.mode == "table":
            self.table = Parameter(rng.normal(0.0, cfg.table_scale, size=(len(vocab), d_model)))
            self.layers: List[EncoderLayer] = []
            return
        if d_model % cfg.n_heads != 0:
            raise ConfigError(f"teacher d_model={d_model} is not divisible by n_heads={cfg.n_heads}")
        self.embedding = Embedding(len(vocab), d_model, rng)
        self.cls = Parameter(rng.normal(0.0, d_model ** -0.5, size=d_model))
        self.mask_vector = Parameter(rng.normal(0.0, d_model ** -0.5, size=d_model))
        self.layers = [
            EncoderLayer(d_model, cfg.n_heads, cfg.d_ff, rng, cfg.dropout) for _ in range(cfg.n_layers)
        ]
        self.mlm_head = Linear(d_model, len(vocab), rng)

    # --- tiện ích ---
    def freeze(self) -> "TeacherModel":
        super().freeze()
        self.eval()
        self.frozen = True
        logger.info("Teacher frozen (mode=%s, state_hash=%s)", self.mode, self.state_hash()[:12])
        return self

    def _clean_ids(self, z: Sequence[int]) -> np.ndarray:
        ids = np.asarray(list(z), dtype=np.int64)
        out_of_range = (ids < 0) | (ids >= len(self.vocab))
        return np.where(out_of_range, self.vocab.unk_id, ids)

    def _target_index(self) -> int:
        return len(self.layers) if self.cfg.target_layer == -1 else self.cfg.target_layer

    # --- forward chế độ trained ---
    def hidden_states(
        self,
        ids: np.ndarray,
        lengths: np.ndarray,
        masked: Optional[np.ndarray] = None,
    ) -> List[Tensor]:
        """
        ids (B, L) đã pad; trả về [đầu vào, lớp 1, ..., lớp N], mỗi phần tử
        (B, L + 1, d) với vị trí 0 là [CLS].
        """
        if self.mode != "trained":
            raise ConfigError("hidden_states is only defined for the trained teacher")
        batch, length = ids.shape
        tokens = self.embedding(ids)
        if masked is not None:
            tokens = where(masked[:, :, None], reshape(self.mask_vector, (1, 1, self.d_model)), tokens)
        cls = reshape(self.cls, (1, 1, self.d_model)) * np.ones((batch, 1, 1))

        x = concat([cls, tokens], axis=1) + F.positional_encoding(length + 1, self.d_model)
        mask = F.key_padding_mask(np.asarray(lengths) + 1, length + 1)
        states = [x]
        for layer in self.layers:
            x = layer(x, mask)
            states.append(x)
        return states

    def mlm_logits(self, hidden: Tensor) -> Tensor:
        """Logit từ vựng cho các vị trí token (bỏ [CLS])."""
        return self.mlm_head(getitem(hidden, (slice(None), slice(1, None), slice(None))))

    # --- embed ---
    def embed(self, z: Sequence[int]) -> TeacherEmbedding:
        if len(z) == 0:
            raise EmptyInputError("Teacher cannot embed an empty transcription")
        ids = self._clean_ids(z)
        if self.mode == "table":
            rows = self.table.data[ids].copy()
            return TeacherEmbedding(h_c=rows.mean(axis=0), per_token=rows)

        key = tuple(ids.tolist())
        if self.frozen and key in self._cache:
            cached = self._cache[key]
            return TeacherEmbedding(h_c=cached.h_c.copy(), per_token=cached.per_token.copy())
        was_training = self.training
        self.eval()
        with no_grad():
            states = self.hidden_states(ids[None, :], np.array([len(ids)]))
        self.train(was_training)
        out = states[self._target_index()].data[0]
        result = TeacherEmbedding(h_c=out[0].copy(), per_token=out[1:].copy())
        # đã đóng băng thì embed là hàm thuần -> cache theo chuỗi id
        if self.frozen:
            self._cache[key] = result
        return TeacherEmbedding(h_c=result.h_c.copy(), per_token=result.per_token.copy())

    def embed_batch(self, zs: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """-> (per_token pad 0 (B, L_max, d), lengths (B,), h_c (B, d)); hằng số, không gradient."""
        embeddings = [self.embed(z) for z in zs]
        lengths = np.array([e.length for e in embeddings], dtype=np.int64)
        per_token = np.zeros((len(zs), int(lengths.max()), self.d_model))
        for i, e in enumerate(embeddings):
            per_token[i, : e.length] = e.per_token
        h_c = np.stack([e.h_c for e in embeddings], axis=0)
        return per_token, lengths, h_c

    def assert_trainable(self) -> None:
        if self.frozen:
            raise FrozenModelError("Teacher is frozen; its parameters cannot be updated")


def table_mode(vocab: Vocab, d_model: int, seed: int = 0, scale: float = 1.0) -> TeacherModel:
    """Teacher tra bảng: hàng Gauss theo seed cho mỗi id token; đóng băng ngay."""
    return TeacherModel(vocab, d_model, TeacherConfig(mode="table", seed=seed, table_scale=scale)).freeze()


# --- lưu / nạp ---

def save_teacher(path: Union[str, Path], teacher: TeacherModel) -> Path:
    metadata = {
        "tag": TEACHER_TAG,
        "d_model": teacher.d_model,
        "vocab": teacher.vocab.tokens,
        "config": asdict(teacher.cfg),
        "state_hash": teacher.state_hash(),
    }
    return save_container(path, teacher.state_dict(), metadata)


def load_teacher(path: Union[str, Path]) -> TeacherModel:
    arrays, metadata = load_container(path)
    if metadata.get("tag") != TEACHER_TAG:
        raise CheckpointError(f"{path} is not a teacher checkpoint (tag={metadata.get('tag')!r})")
    teacher = TeacherModel(Vocab(metadata["vocab"]), int(metadata["d_model"]), TeacherConfig(**metadata["config"]))
    teacher.load_state_dict(arrays)
    return teacher.freeze()
