"""
Chiến lược huấn luyện bán giám sát:

    lặp cho tới max_steps / early stop:
        Step 1: batch (x, z) từ S (base) hoặc A (expanded) -> tối ưu L_ae + L_se
        Step 2: batch (x, z, y) từ S                       -> tối ưu alpha*L_ae + beta*L_se + gamma*L_td

Tỉ lệ Step 1 : Step 2 cấu hình được (mặc định 1:1). Chế độ expanded có thêm
pha pretrain encoder âm học chỉ với CTC trên A.
"""
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import no_grad
from src.ctc.ctc_loss import ctc_loss_batch
from src.data.batching import Batch, collate, filter_feasible, iterate_batches, make_batches
from src.data.featurize import FeatureConfig, FeatureNormalizer
from src.data.spec_augment import AugmentConfig
from src.data.utterance import Utterance
from src.data.vocab import Vocab
from src.model.losses import LossComponents, step1_weights, token_accuracy, total_loss
from src.model.lut_model import LutModel
from src.teacher.teacher_model import TeacherModel
from src.training.checkpoints import average_state_dicts, save_checkpoint
from src.training.optimizer import Adam
from src.training.schedule import Schedule, lr_at
from src.utils.errors import ConfigError, EmptyInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)

TRAIN_MODES = ("base", "expanded")
STEP_PRETRAIN = "pretrain"
STEP_ONE = "step1"
STEP_TWO = "step2"


@dataclass
class TrainPlan:
    mode: str = "base"
    ratio: Tuple[int, int] = (1, 1)     # Step 1 : Step 2
    max_steps: int = 5000               # số update Step 1 + Step 2 (không tính pretrain)
    pretrain_steps: int = 0             # chỉ dùng ở chế độ expanded
    frames_budget: int = 1200
    checkpoint_interval: int = 500
    average_last_k: int = 10
    eval_interval: int = 250
    patience: int = 5
    clip_norm: Optional[float] = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"train.mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        self.ratio = tuple(int(r) for r in self.ratio)
        if len(self.ratio) != 2 or min(self.ratio) < 0 or sum(self.ratio) == 0:
            raise ConfigError(f"train.ratio must be two non-negative ints, not both 0 (got {self.ratio})")
        if self.max_steps < 0 or self.pretrain_steps < 0:
            raise ConfigError("train.max_steps and train.pretrain_steps must be >= 0")
        if self.frames_budget < 1:
            raise ConfigError("train.frames_budget must be >= 1")
        if self.average_last_k < 1:
            raise ConfigError("train.average_last_k must be >= 1")

    def step_kinds(self) -> Iterator[str]:
        """Chuỗi loại bước theo tỉ lệ: (1,1) -> step1, step2, step1, step2, ..."""
        pattern = [STEP_ONE] * self.ratio[0] + [STEP_TWO] * self.ratio[1]
        while True:
            yield from pattern


@dataclass
class TrainCounters:
    pretrain: int = 0
    step1: int = 0
    step2: int = 0
    evaluations: int = 0
    checkpoints: int = 0

    def bump(self, kind: str) -> None:
        setattr(self, kind, getattr(self, kind) + 1)

    @property
    def updates(self) -> int:
        return self.pretrain + self.step1 + self.step2


@dataclass
class DevResult:
    loss: float
    token_accuracy: float
    n_tokens: int


@dataclass
class TrainResult:
    model: LutModel
    counters: TrainCounters
    history: List[dict] = field(default_factory=list)
    dev_history: List[dict] = field(default_factory=list)
    best_dev_loss: float = float("inf")
    stopped_early: bool = False
    checkpoint_paths: List[Path] = field(default_factory=list)
    log_path: Optional[Path] = None


class TrainingLog:
    """Ghi log huấn luyện dạng JSON mỗi dòng một record."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path is not None else None
        self.records: List[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")


def ctc_only_loss(model: LutModel, batch: Batch):
    """Pha pretrain: chỉ encoder âm học + đầu CTC nằm trong graph."""
    _, ctc_log_probs = model.acoustic_encode(batch.features, batch.frame_lengths)
    return ctc_loss_batch(ctc_log_probs, batch.frame_lengths, batch.ctc_targets, reduction="frame_mean")


def train_step(
    model: LutModel,
    teacher: TeacherModel,
    optimizer: Adam,
    batch: Batch,
    lr: float,
    kind: str,
) -> LossComponents:
    """Một update. Step 1 / pretrain không chạy decoder nên gradient decoder giữ None."""
    optimizer.zero_grad()
    if kind == STEP_PRETRAIN:
        loss = ctc_only_loss(model, batch)
        components = LossComponents(l_ae=loss.item(), l_se=0.0, l_td=None, total=loss.item())
    elif kind == STEP_ONE:
        alpha, beta, _ = model.cfg.weights
        loss, components = total_loss(
            model, batch, teacher, weights=step1_weights(alpha, beta), include_translation=False
        )
    elif kind == STEP_TWO:
        loss, components = total_loss(model, batch, teacher, include_translation=True)
    else:
        raise ConfigError(f"Unknown step kind {kind!r}")
    loss.backward()
    optimizer.step(lr)
    return components


def evaluate_dev(
    model: LutModel,
    teacher: TeacherModel,
    dev: Sequence[Utterance],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    frames_budget: int,
) -> DevResult:
    """Loss tổng (trung bình theo batch) và token accuracy teacher-forced trên dev."""
    was_training = model.training
    model.eval()
    losses, correct, total = [], 0, 0
    with no_grad():
        for group in make_batches(dev, frames_budget, seed=0, shuffle=False):
            batch = collate(group, src_vocab, tgt_vocab)
            _, components = total_loss(model, batch, teacher, include_translation=batch.has_translation)
            losses.append(components.total)
            if batch.has_translation:
                out = model.encode(batch.features, batch.frame_lengths)
                log_probs = model.decode_forward(batch.y_in, out.h_se, batch.frame_lengths)
                hit, n = token_accuracy(log_probs, batch.y_out, batch.y_mask)
                correct += hit
                total += n
    model.train(was_training)
    return DevResult(
        loss=float(np.mean(losses)) if losses else float("nan"),
        token_accuracy=correct / total if total else float("nan"),
        n_tokens=total,
    )


def run_semi_supervised(
    plan: TrainPlan,
    model: LutModel,
    teacher: TeacherModel,
    triples: Sequence[Utterance],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    asr_pairs: Sequence[Utterance] = (),
    dev: Sequence[Utterance] = (),
    schedule: Optional[Schedule] = None,
    augment: Optional[AugmentConfig] = None,
    out_dir: Optional[Path] = None,
    normalizer: Optional[FeatureNormalizer] = None,
    features: Optional[FeatureConfig] = None,
) -> TrainResult:
    schedule = schedule or Schedule()
    triples = filter_feasible(triples, src_vocab)
    if not triples:
        raise EmptyInputError("Semi-supervised training needs a non-empty ST-triple set S")
    asr_pairs = filter_feasible(asr_pairs, src_vocab)
    dev = filter_feasible(dev, src_vocab)
    if plan.mode == "expanded" and not asr_pairs:
        raise ConfigError("mode=expanded needs a non-empty ASR-pair set A")
    alpha, beta, _ = model.cfg.weights
    if plan.ratio[0] > 0 and alpha + beta <= 0:
        raise ConfigError("Step-1 batches need alpha + beta > 0; set train.ratio to [0, 1]")
    if not teacher.frozen:
        logger.warning("Teacher was not frozen; freezing it before LUT training")
        teacher.freeze()

    out_dir = Path(out_dir) if out_dir is not None else None
    log = TrainingLog(out_dir / "train_log.jsonl" if out_dir is not None else None)
    step1_source = asr_pairs if plan.mode == "expanded" else triples
    logger.info(
        "=== START TRAIN LUT | mode=%s branch=%s | S=%d A=%d dev=%d | ratio=%s max_steps=%d pretrain=%d ===",
        plan.mode, model.cfg.branch, len(triples), len(asr_pairs), len(dev),
        plan.ratio, plan.max_steps, plan.pretrain_steps if plan.mode == "expanded" else 0,
    )

    model.train()
    optimizer = Adam(model.named_parameters(), clip_norm=plan.clip_norm)
    rng = np.random.default_rng(plan.seed)
    step1_batches = iterate_batches(step1_source, plan.frames_budget, plan.seed + 1)
    step2_batches = iterate_batches(triples, plan.frames_budget, plan.seed + 2)
    counters = TrainCounters()
    result = TrainResult(model=model, counters=counters, log_path=log.path)
    snapshots: deque = deque(maxlen=plan.average_last_k)

    def _update(kind: str, group: List[Utterance]) -> None:
        batch = collate(group, src_vocab, tgt_vocab, augment=augment, rng=rng, drop_translation=kind != STEP_TWO)
        lr = lr_at(counters.updates + 1, schedule)
        components = train_step(model, teacher, optimizer, batch, lr, kind)
        counters.bump(kind)
        record = {
            "step": counters.updates,
            "lr": lr,
            **components.as_record(),
            "branch_mode": model.cfg.branch,
            "step_kind": kind,
        }
        log.write(record)
        result.history.append(record)

    if plan.mode == "expanded" and plan.pretrain_steps:
        pretrain_batches = iterate_batches(asr_pairs, plan.frames_budget, plan.seed + 3)
        for _ in range(plan.pretrain_steps):
            _update(STEP_PRETRAIN, next(pretrain_batches))
        logger.info("CTC pretraining done: %d updates", counters.pretrain)

    bad_evals = 0
    kinds = plan.step_kinds()
    for i in range(1, plan.max_steps + 1):
        kind = next(kinds)
        _update(kind, next(step1_batches if kind == STEP_ONE else step2_batches))

        if plan.checkpoint_interval and i % plan.checkpoint_interval == 0:
            snapshots.append(model.state_dict())
            counters.checkpoints += 1
            if out_dir is not None:
                path = save_checkpoint(
                    out_dir / f"ckpt_{counters.updates}.lut", model, src_vocab, tgt_vocab,
                    counters.updates, normalizer, features, extra={"seed": plan.seed},
                )
                result.checkpoint_paths.append(path)

        if dev and plan.eval_interval and i % plan.eval_interval == 0:
            dev_result = evaluate_dev(model, teacher, dev, src_vocab, tgt_vocab, plan.frames_budget)
            counters.evaluations += 1
            result.dev_history.append({"step": counters.updates, **asdict(dev_result)})
            logger.info(
                "step=%d dev_loss=%.4f dev_token_acc=%.4f", counters.updates, dev_result.loss,
                dev_result.token_accuracy,
            )
            if dev_result.loss < result.best_dev_loss:
                result.best_dev_loss = dev_result.loss
                bad_evals = 0
            else:
                bad_evals += 1
                if plan.patience and bad_evals >= plan.patience:
                    logger.info("Early stop at step %d: dev loss flat for %d evaluations", i, bad_evals)
                    result.stopped_early = True
                    break

    if snapshots:
        model.load_state_dict(average_state_dicts(list(snapshots)))
        logger.info("Final model = average of last %d checkpoints", len(snapshots))
    if out_dir is not None:
        final = save_checkpoint(
            out_dir / "final.lut", model, src_vocab, tgt_vocab, counters.updates, normalizer, features,
            extra={"seed": plan.seed, "averaged_over": len(snapshots)},
        )
        result.checkpoint_paths.append(final)

    model.eval()
    logger.info(
        "=== TRAIN LUT SUCCESS | pretrain=%d step1=%d step2=%d evaluations=%d ===",
        counters.pretrain, counters.step1, counters.step2, counters.evaluations,
    )
    return result
