"""
Manifest utterance dạng JSONL (mỗi dòng một record) + file vocab.

Record (format_version = 1):
    {"format_version": 1, "utt_id": ..., "features": [[...], ...] | "feats/<utt_id>.f64",
     "z": ["s3", "s7", ...], "y": ["t1", ...] | null,
     "speaker_id": 0, "intent_id": 2, "kind": "st" | "asr"}

File feature thô (khi không inline): header 2 x uint32 little-endian (T, F),
tiếp theo T*F số float64 little-endian theo hàng. Đường dẫn tương đối so với
thư mục chứa manifest.
"""
import json
import struct
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.data.utterance import KIND_ASR, KIND_ST, Utterance
from src.data.validate_schema import validate_dataframe_schema
from src.data.vocab import Vocab
from src.utils.checkpoint_utils import read_bytes, write_bytes
from src.utils.errors import DimensionError, SchemaValidationError
from src.utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_VERSION = 1
FEATURE_HEADER = struct.Struct("<II")
SCHEMA_PATH = Path(__file__).resolve().parents[2] / "schemas" / "utterance_manifest.yaml"

PathLike = Union[str, Path]


# --- file feature thô ---

def encode_raw_features(features: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.asarray(features, dtype="<f8"))
    if arr.ndim != 2:
        raise DimensionError(f"raw feature file needs a (T, F) array, got {arr.shape}")
    return FEATURE_HEADER.pack(*arr.shape) + arr.tobytes(order="C")


def decode_raw_features(blob: bytes) -> np.ndarray:
    n_frames, dim = FEATURE_HEADER.unpack_from(blob, 0)
    body = np.frombuffer(blob, dtype="<f8", offset=FEATURE_HEADER.size)
    if body.size != n_frames * dim:
        raise DimensionError(f"raw feature file holds {body.size} values, header says {n_frames}x{dim}")
    return body.reshape(n_frames, dim).astype(np.float64)


# --- bảng tóm tắt để kiểm tra schema ---

def manifest_frame(utterances: Sequence[Utterance]) -> pd.DataFrame:
    return pd.DataFrame({
        "utt_id": [u.utt_id for u in utterances],
        "n_frames": [u.n_frames for u in utterances],
        "feature_dim": [u.feature_dim for u in utterances],
        "z_len": [len(u.z) for u in utterances],
        "y_len": pd.array([len(u.y) if u.y is not None else None for u in utterances], dtype="Int64"),
        "speaker_id": [u.speaker_id for u in utterances],
        "intent_id": [u.intent_id for u in utterances],
        "kind": [u.kind for u in utterances],
    })


def validate_manifest(utterances: Sequence[Utterance], strict: bool = True) -> None:
    if not utterances:
        return
    df = manifest_frame(utterances)
    validate_dataframe_schema(df, str(SCHEMA_PATH), strict=strict)
    if df["feature_dim"].nunique() > 1:
        msg = f"Manifest mixes feature widths: {sorted(df['feature_dim'].unique().tolist())}"
        if strict:
            raise SchemaValidationError(msg)
        logger.warning(msg)


# --- ghi / đọc ---

def write_manifest(
    path: PathLike,
    utterances: Sequence[Utterance],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    inline: bool = False,
) -> Path:
    """inline=False: feature ghi ra <stem>_feats/<utt_id>.f64 cạnh manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    feat_dir = path.parent / f"{path.stem}_feats"

    lines = []
    for utt in utterances:
        if inline:
            features = utt.features.tolist()
        else:
            rel = Path(feat_dir.name) / f"{utt.utt_id}.f64"
            write_bytes(encode_raw_features(utt.features), path.parent / rel)
            features = rel.as_posix()
        record = {
            "format_version": MANIFEST_VERSION,
            "utt_id": utt.utt_id,
            "features": features,
            "z": src_vocab.decode(utt.z),
            "y": tgt_vocab.decode(utt.y) if utt.y is not None else None,
            "speaker_id": utt.speaker_id,
            "intent_id": utt.intent_id,
            "kind": utt.kind,
        }
        lines.append(json.dumps(record))

    text = "\n".join(lines) + ("\n" if lines else "")
    write_bytes(text.encode("utf-8"), path)
    logger.info("Wrote manifest %s (%d utterances, inline=%s)", path, len(lines), inline)
    return path


def read_manifest(
    path: PathLike,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    validate: bool = True,
) -> List[Utterance]:
    """Manifest rỗng -> [] kèm cảnh báo (không phải lỗi)."""
    path = Path(path)
    raw = read_bytes(path).decode("utf-8")
    utterances = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        version = record.get("format_version", MANIFEST_VERSION)
        if version != MANIFEST_VERSION:
            raise SchemaValidationError(f"{path}:{lineno}: unsupported manifest version {version}")

        features = record["features"]
        if isinstance(features, str):
            features = decode_raw_features(read_bytes(path.parent / features))
        y_tokens: Optional[list] = record.get("y")
        kind = record.get("kind") or (KIND_ST if y_tokens is not None else KIND_ASR)
        utterances.append(Utterance(
            utt_id=record["utt_id"],
            features=np.asarray(features, dtype=np.float64),
            z=tuple(src_vocab.encode(record["z"])),
            y=tuple(tgt_vocab.encode(y_tokens)) if y_tokens is not None else None,
            speaker_id=int(record.get("speaker_id", 0)),
            intent_id=int(record.get("intent_id", 0)),
            kind=kind,
        ))

    if not utterances:
        logger.warning("Manifest %s is empty", path)
        return []
    if validate:
        validate_manifest(utterances, strict=True)
    logger.info("Loaded %d utterances from %s", len(utterances), path)
    return utterances
