"""
Probing: lấy output của một lớp encoder, trung bình theo thời gian, đóng băng,
rồi huấn luyện một bộ phân loại tuyến tính (speaker hoặc intent).
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.layers import Linear
from src.core.tensor import Tensor, getitem, log_softmax, no_grad
from src.data.batching import collate, make_batches
from src.data.utterance import Utterance
from src.data.vocab import Vocab
from src.model.lut_model import LutModel
from src.training.optimizer import Adam
from src.utils.errors import ConfigError, EmptyInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)

PROBE_TASKS = ("speaker", "intent")


@dataclass
class ProbeConfig:
    steps: int = 2000
    lr: float = 0.01
    batch_size: int = 64
    test_fraction: float = 0.3
    layers: Tuple[str, ...] = ("h_ae", "h_se")
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("probe.steps and probe.batch_size must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("probe.test_fraction must be in (0, 1)")
        self.layers = tuple(self.layers)


@dataclass
class ProbeResult:
    task: str
    layer: str
    n_classes: int
    n_train: int
    n_test: int
    train_accuracy: float
    test_accuracy: float


def layer_names(model: LutModel) -> List[str]:
    names = [f"acoustic.{i}" for i in range(model.cfg.n_ae)] + [f"semantic.{i}" for i in range(model.cfg.n_se)]
    return ["h_ae", "h_se"] + names


def pooled_layer_features(
    model: LutModel,
    utterances: Sequence[Utterance],
    src_vocab: Vocab,
    layers: Sequence[str],
    frames_budget: int = 4000,
) -> Dict[str, np.ndarray]:
    """layer -> (N, d_model): trung bình theo thời gian trên frame hợp lệ, theo thứ tự utterances."""
    known = layer_names(model)
    unknown = [name for name in layers if name not in known]
    if unknown:
        raise ConfigError(f"Unknown probe layers {unknown}; available: {known}")
    if not utterances:
        raise EmptyInputError("Probing needs at least one utterance")

    order = {u.utt_id: i for i, u in enumerate(utterances)}
    feats = {name: np.zeros((len(utterances), model.cfg.d_model)) for name in layers}
    budget = max(frames_budget, max(u.n_frames for u in utterances))
    was_training = model.training
    model.eval()
    with no_grad():
        for group in make_batches(utterances, budget, seed=0, shuffle=False):
            batch = collate(group, src_vocab, src_vocab, drop_translation=True)
            out = model.encode(batch.features, batch.frame_lengths, return_layers=True)
            by_name = {"h_ae": out.h_ae, "h_se": out.h_se}
            by_name.update({f"acoustic.{i}": t for i, t in enumerate(out.acoustic_layers)})
            by_name.update({f"semantic.{i}": t for i, t in enumerate(out.semantic_layers)})
            valid = batch.frame_mask[:, :, None]
            rows = [order[u] for u in batch.utt_ids]
            for name in layers:
                states = by_name[name].data
                feats[name][rows] = (states * valid).sum(axis=1) / batch.frame_lengths[:, None]
    model.train(was_training)
    return feats


def _split(n: int, test_fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return order[n_test:], order[:n_test]


def _accuracy(classifier: Linear, x: np.ndarray, y: np.ndarray) -> float:
    with no_grad():
        scores = classifier(Tensor(x)).data
    return float(np.mean(np.argmax(scores, axis=-1) == y))


def probe(features: np.ndarray, labels: Sequence[int], cfg: Optional[ProbeConfig] = None,
          task: str = "speaker", layer: str = "features") -> ProbeResult:
    """Phân loại tuyến tính (softmax) trên đặc trưng đóng băng; trả về accuracy trên tập test."""
    cfg = cfg or ProbeConfig()
    x = np.asarray(features, dtype=np.float64)
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        raise ConfigError(f"Probing needs at least 2 classes, got {len(classes)}")
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"features {x.shape} do not match {y.shape[0]} labels")

    rng = np.random.default_rng(cfg.seed)
    train_idx, test_idx = _split(len(y), cfg.test_fraction, rng)
    # chuẩn hoá theo thống kê tập train
    mean, std = x[train_idx].mean(axis=0), x[train_idx].std(axis=0) + 1e-8
    x = (x - mean) / std

    classifier = Linear(x.shape[1], len(classes), rng)
    optimizer = Adam(classifier.named_parameters())
    for _ in range(cfg.steps):
        picks = train_idx[rng.integers(0, len(train_idx), size=min(cfg.batch_size, len(train_idx)))]
        optimizer.zero_grad()
        log_probs = log_softmax(classifier(Tensor(x[picks])), axis=-1)
        loss = -getitem(log_probs, (np.arange(len(picks)), y[picks])).mean()
        loss.backward()
        optimizer.step(cfg.lr)

    result = ProbeResult(
        task=task,
        layer=layer,
        n_classes=len(classes),
        n_train=len(train_idx),
        n_test=len(test_idx),
        train_accuracy=_accuracy(classifier, x[train_idx], y[train_idx]),
        test_accuracy=_accuracy(classifier, x[test_idx], y[test_idx]),
    )
    logger.info("probe task=%s layer=%s test_acc=%.4f", task, layer, result.test_accuracy)
    return result


def probe_model(
    model: LutModel,
    utterances: Sequence[Utterance],
    src_vocab: Vocab,
    task: str,
    cfg: Optional[ProbeConfig] = None,
) -> List[ProbeResult]:
    cfg = cfg or ProbeConfig()
    if task not in PROBE_TASKS:
        raise ConfigError(f"probe task must be one of {PROBE_TASKS}, got {task!r}")
    logger.info("=== START PROBE | task=%s layers=%s utterances=%d ===", task, list(cfg.layers), len(utterances))
    labels = [u.speaker_id if task == "speaker" else u.intent_id for u in utterances]
    feats = pooled_layer_features(model, utterances, src_vocab, cfg.layers)
    results = [probe(feats[name], labels, cfg, task=task, layer=name) for name in cfg.layers]
    logger.info("=== PROBE SUCCESS ===")
    return results
