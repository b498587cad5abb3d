"""
Huấn luyện teacher bằng masked-token prediction (15% vị trí được thay bằng
vector mask học được, mỗi chuỗi ít nhất một vị trí), sau đó đóng băng.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import Tensor, getitem, log_softmax, no_grad
from src.data.vocab import Vocab
from src.teacher.teacher_model import TeacherConfig, TeacherModel
from src.training.optimizer import Adam
from src.training.schedule import Schedule, lr_at
from src.utils.errors import EmptyInputError, FrozenModelError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class TeacherReport:
    steps: int
    final_loss: float
    heldout_accuracy: float
    n_train: int
    n_heldout: int
    state_hash: str


@dataclass
class MlmBatch:
    ids: np.ndarray        # (B, L) pad bằng <pad>
    lengths: np.ndarray
    masked: np.ndarray     # (B, L) bool, chỉ trong phần hợp lệ


def draw_mlm_batch(
    sequences: Sequence[Sequence[int]], pad_id: int, mask_prob: float, rng: np.random.Generator
) -> MlmBatch:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    width = int(lengths.max())
    ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
    masked = np.zeros((len(sequences), width), dtype=bool)
    for i, seq in enumerate(sequences):
        ids[i, : len(seq)] = seq
        chosen = rng.random(len(seq)) < mask_prob
        if not chosen.any():
            chosen[int(rng.integers(0, len(seq)))] = True
        masked[i, : len(seq)] = chosen
    return MlmBatch(ids=ids, lengths=lengths, masked=masked)


def mlm_loss(teacher: TeacherModel, batch: MlmBatch) -> Tuple[Tensor, float]:
    """Cross-entropy trung bình trên các vị trí bị mask; kèm accuracy của batch."""
    states = teacher.hidden_states(batch.ids, batch.lengths, batch.masked)
    log_probs = log_softmax(teacher.mlm_logits(states[-1]), axis=-1)
    rows, cols = np.nonzero(batch.masked)
    picked = getitem(log_probs, (rows, cols, batch.ids[rows, cols]))
    predicted = np.argmax(log_probs.data[rows, cols], axis=-1)
    accuracy = float(np.mean(predicted == batch.ids[rows, cols]))
    return -picked.mean(), accuracy


def mlm_step(
    teacher: TeacherModel, batch: MlmBatch, optimizer: Adam, lr: float
) -> Optional[float]:
    """Một bước cập nhật; teacher đã đóng băng -> không làm gì (trả về None)."""
    try:
        teacher.assert_trainable()
    except FrozenModelError:
        logger.warning("mlm_step called on a frozen teacher; parameters left unchanged")
        return None
    optimizer.zero_grad()
    loss, _ = mlm_loss(teacher, batch)
    loss.backward()
    optimizer.step(lr)
    return loss.item()


def masked_accuracy(
    teacher: TeacherModel, sequences: Sequence[Sequence[int]], mask_prob: float, seed: int, batch_size: int = 64
) -> float:
    if not sequences:
        return float("nan")
    rng = np.random.default_rng(seed)
    was_training = teacher.training
    teacher.eval()
    hits, total = 0.0, 0
    with no_grad():
        for lo in range(0, len(sequences), batch_size):
            chunk = sequences[lo:lo + batch_size]
            batch = draw_mlm_batch(chunk, teacher.vocab.pad_id, mask_prob, rng)
            _, acc = mlm_loss(teacher, batch)
            n = int(batch.masked.sum())
            hits += acc * n
            total += n
    teacher.train(was_training)
    return hits / total


def train_teacher(
    sequences: Sequence[Sequence[int]],
    vocab: Vocab,
    d_model: int,
    cfg: TeacherConfig,
    heldout: Optional[Sequence[Sequence[int]]] = None,
) -> Tuple[TeacherModel, TeacherReport]:
    """
    sequences: các bản ghi nguồn (id token). Chế độ table bỏ qua huấn luyện.
    Trả về teacher đã đóng băng + báo cáo accuracy trên tập giữ lại.
    """
    sequences = [list(s) for s in sequences if len(s) > 0]
    if not sequences:
        raise EmptyInputError("Teacher training needs a non-empty monolingual corpus")

    if cfg.mode == "table":
        teacher = TeacherModel(vocab, d_model, cfg).freeze()
        return teacher, TeacherReport(0, 0.0, float("nan"), len(sequences), 0, teacher.state_hash())

    rng = np.random.default_rng(cfg.seed)
    if heldout is None:
        order = rng.permutation(len(sequences))
        n_held = int(round(len(sequences) * cfg.heldout_fraction))
        heldout = [sequences[i] for i in order[:n_held]]
        train = [sequences[i] for i in order[n_held:]] or sequences
    else:
        heldout = [list(s) for s in heldout if len(s) > 0]
        train = sequences

    logger.info(
        "=== START TRAIN TEACHER | train=%d heldout=%d | d_model=%d layers=%d heads=%d steps=%d ===",
        len(train), len(heldout), d_model, cfg.n_layers, cfg.n_heads, cfg.steps,
    )
    teacher = TeacherModel(vocab, d_model, cfg).train()
    optimizer = Adam(teacher.named_parameters())
    schedule = Schedule(peak_lr=cfg.peak_lr, warmup_steps=cfg.warmup_steps, decay_rate=1.0, decay_steps=1)

    loss_value = float("nan")
    for step in range(1, cfg.steps + 1):
        picks = rng.integers(0, len(train), size=min(cfg.batch_size, len(train)))
        batch = draw_mlm_batch([train[i] for i in picks], vocab.pad_id, cfg.mask_prob, rng)
        loss_value = mlm_step(teacher, batch, optimizer, lr_at(step, schedule))
        if cfg.eval_interval and step % cfg.eval_interval == 0:
            acc = masked_accuracy(teacher, heldout, cfg.mask_prob, seed=cfg.seed + 1) if heldout else float("nan")
            logger.info("teacher step=%d loss=%.4f heldout_acc=%.4f", step, loss_value, acc)

    teacher.freeze()
    accuracy = masked_accuracy(teacher, heldout, cfg.mask_prob, seed=cfg.seed + 1) if heldout else float("nan")
    report = TeacherReport(
        steps=cfg.steps,
        final_loss=loss_value,
        heldout_accuracy=accuracy,
        n_train=len(train),
        n_heldout=len(heldout),
        state_hash=teacher.state_hash(),
    )
    logger.info("=== TRAIN TEACHER SUCCESS | heldout masked accuracy=%.4f ===", accuracy)
    return teacher, report
