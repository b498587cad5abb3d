"""
Lưu / nạp checkpoint LUT và lấy trung bình K checkpoint cuối.

Metadata: tag "lut", config_hash, step, model_config, vocab hai phía, seed.
Thống kê chuẩn hoá feature (nếu có) nằm chung container với prefix "featurizer.".
"""
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.featurize import FeatureConfig, FeatureNormalizer
from src.data.vocab import Vocab
from src.model.lut_model import LutModel
from src.model.model_config import ModelConfig
from src.utils.checkpoint_utils import load_container, save_container
from src.utils.config import config_hash
from src.utils.errors import CheckpointError, CheckpointMismatchError, ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

LUT_TAG = "lut"
FEATURIZER_PREFIX = "featurizer."

PathLike = Union[str, Path]


def model_hash(
    cfg: ModelConfig, src_vocab: Vocab, tgt_vocab: Vocab, features: Optional[FeatureConfig] = None
) -> str:
    return config_hash({
        "model": cfg.shape_payload(),
        "features": asdict(features) if features is not None else None,
        "src_vocab": src_vocab.tokens,
        "tgt_vocab": tgt_vocab.tokens,
    })


def save_checkpoint(
    path: PathLike,
    model: LutModel,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    step: int,
    normalizer: Optional[FeatureNormalizer] = None,
    features: Optional[FeatureConfig] = None,
    extra: Optional[dict] = None,
) -> Path:
    arrays = dict(model.state_dict())
    if normalizer is not None:
        arrays.update(normalizer.to_arrays())
    metadata = {
        "tag": LUT_TAG,
        "step": int(step),
        "config_hash": model_hash(model.cfg, src_vocab, tgt_vocab, features),
        "features": asdict(features) if features is not None else None,
        "model_config": asdict(model.cfg),
        "src_vocab": src_vocab.tokens,
        "tgt_vocab": tgt_vocab.tokens,
        "state_hash": model.state_hash(),
    }
    metadata.update(extra or {})
    return save_container(path, arrays, metadata)


def _split_arrays(arrays: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    params = {k: v for k, v in arrays.items() if not k.startswith(FEATURIZER_PREFIX)}
    featurizer = {k: v for k, v in arrays.items() if k.startswith(FEATURIZER_PREFIX)}
    return params, featurizer


def read_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], dict]:
    arrays, metadata = load_container(path)
    if metadata.get("tag") != LUT_TAG:
        raise CheckpointError(f"{path} is not a LUT checkpoint (tag={metadata.get('tag')!r})")
    return arrays, metadata


def load_checkpoint(
    path: PathLike, expected_hash: Optional[str] = None
) -> Tuple[LutModel, Vocab, Vocab, Optional[FeatureNormalizer], dict]:
    """
    Dựng lại model từ checkpoint. expected_hash khác config_hash đã lưu ->
    CheckpointMismatchError (không nạp nửa vời).
    """
    arrays, metadata = read_checkpoint(path)
    found = metadata.get("config_hash", "")
    if expected_hash is not None and expected_hash != found:
        raise CheckpointMismatchError(expected_hash, found)
    try:
        cfg = ModelConfig(**metadata["model_config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable model_config ({exc})") from exc
    params, featurizer = _split_arrays(arrays)
    model = LutModel(cfg)
    model.load_state_dict(params)
    model.eval()
    normalizer = FeatureNormalizer.from_arrays(featurizer) if featurizer else None
    logger.info("Loaded checkpoint %s (step=%s, hash=%s)", path, metadata.get("step"), found[:12])
    return model, Vocab(metadata["src_vocab"]), Vocab(metadata["tgt_vocab"]), normalizer, metadata


def average_state_dicts(states: Sequence[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    if not states:
        raise ConfigError("Nothing to average")
    names = list(states[0])
    for state in states[1:]:
        if set(state) != set(names):
            raise CheckpointError("Cannot average states with different parameter names")
        for name in names:
            if state[name].shape != states[0][name].shape:
                raise CheckpointError(
                    f"Shape mismatch for {name}: {state[name].shape} vs {states[0][name].shape}"
                )
    return {name: np.mean(np.stack([s[name] for s in states], axis=0), axis=0) for name in names}


def average_checkpoints(paths: Sequence[PathLike]) -> Tuple[Dict[str, np.ndarray], dict]:
    """
    Trung bình cộng từng phần tử của tham số qua K checkpoint.
    Trả về (arrays, metadata của checkpoint cuối, cập nhật averaged_from).
    """
    if not paths:
        raise ConfigError("average_checkpoints needs at least one checkpoint")
    loaded = [read_checkpoint(p) for p in paths]
    hashes = {m.get("config_hash") for _, m in loaded}
    if len(hashes) != 1:
        raise CheckpointError(f"Cannot average checkpoints with different config hashes: {sorted(hashes)}")

    first, _ = loaded[0]
    params = average_state_dicts([_split_arrays(arrays)[0] for arrays, _ in loaded])
    averaged = {**params, **_split_arrays(first)[1]}

    metadata = dict(loaded[-1][1])
    metadata["averaged_from"] = [str(p) for p in paths]
    logger.info("Averaged %d checkpoints", len(paths))
    return averaged, metadata


def save_averaged(paths: Sequence[PathLike], out_path: PathLike) -> Path:
    arrays, metadata = average_checkpoints(paths)
    params, _ = _split_arrays(arrays)
    model = LutModel(ModelConfig(**metadata["model_config"]))
    model.load_state_dict(params)
    metadata["state_hash"] = model.state_hash()
    return save_container(out_path, arrays, metadata)


def checkpoint_paths(directory: PathLike) -> List[Path]:
    """ckpt_<step>.lut trong thư mục, sắp theo step."""
    directory = Path(directory)
    found = sorted(directory.glob("ckpt_*.lut"), key=lambda p: int(p.stem.split("_")[-1]))
    return found
