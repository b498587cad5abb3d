"""
Container file cho tham số và ma trận (checkpoint, attention export, thống kê CMVN).

Layout (mọi số nguyên little-endian):

    magic        8 bytes   b"LUTCKPT\\x01"
    header_len   uint64
    header       header_len bytes, JSON utf-8:
                 {"format_version": 1,
                  "metadata": {...},
                  "tensors": [{"name", "shape", "offset", "count"}, ...]}
    payload      float64 little-endian, các tensor nối tiếp theo thứ tự header;
                 offset/count tính theo số phần tử (không phải byte)

Ghi -> đọc cho lại đúng từng bit các giá trị float64.
"""
import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np

from src.utils.errors import CheckpointError
from src.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"LUTCKPT\x01"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def write_bytes(data: Union[bytes, bytearray], path: PathLike) -> None:
    """
    Ghi bytes ra file theo kiểu atomic (file tạm + os.replace).
    Ném TypeError nếu dữ liệu không phải bytes.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise TypeError("data must be bytes or bytearray")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError:
        logger.exception("Failed to write %s", path)
        if tmp.exists():
            tmp.unlink()
        raise
    logger.debug("Wrote %d bytes to %s", len(data), path)


def read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Container file not found: {path}")
    return path.read_bytes()


def encode_container(arrays: Mapping[str, np.ndarray], metadata: Mapping) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, value in arrays.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype=_PAYLOAD_DTYPE))
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "count": int(arr.size),
        })
        chunks.append(arr.tobytes(order="C"))
        offset += int(arr.size)

    header = json.dumps(
        {"format_version": FORMAT_VERSION, "metadata": dict(metadata), "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def decode_container(blob: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a container file (bad magic)")
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(blob[start:start + header_len].decode("utf-8"))

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported container version: {version}")

    payload = np.frombuffer(blob, dtype=_PAYLOAD_DTYPE, offset=start + header_len)
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        lo, n = entry["offset"], entry["count"]
        if lo + n > payload.size:
            raise CheckpointError(f"Truncated payload for tensor {entry['name']}")
        arrays[entry["name"]] = payload[lo:lo + n].reshape(entry["shape"]).copy()
    return arrays, header.get("metadata", {})


def save_container(path: PathLike, arrays: Mapping[str, np.ndarray], metadata: Mapping) -> Path:
    path = Path(path)
    write_bytes(encode_container(arrays, metadata), path)
    logger.info("Saved container %s (%d tensors)", path, len(arrays))
    return path


def load_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], dict]:
    return decode_container(read_bytes(path))


def arrays_hash(arrays: Mapping[str, np.ndarray]) -> str:
    """sha256 trên tên + shape + giá trị float64, theo thứ tự tên."""
    digest = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype=_PAYLOAD_DTYPE))
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()
