"""
Xuất ma trận attention từng lớp cho một utterance ra container (cùng định dạng checkpoint).
"""
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from src.core.tensor import no_grad
from src.data.utterance import Utterance
from src.data.vocab import Vocab
from src.evaluation.search import greedy_translate
from src.model.lut_model import LutModel
from src.teacher.teacher_model import TeacherModel
from src.utils.checkpoint_utils import save_container
from src.utils.logger import get_logger

logger = get_logger(__name__)

ATTENTION_TAG = "attention"


def collect_attention(
    model: LutModel,
    utt: Utterance,
    tgt_vocab: Vocab,
    teacher: Optional[TeacherModel] = None,
) -> Dict[str, np.ndarray]:
    """
    name -> (heads, query_len, key_len). Decoder chạy teacher-forced trên bản dịch
    tham chiếu, hoặc trên output greedy khi utterance không có y. Nhánh word chỉ có
    khi truyền teacher.
    """
    y = list(utt.y) if utt.y is not None else greedy_translate(model, utt.features, tgt_vocab)
    prefix = np.array([[tgt_vocab.sos_id] + y], dtype=np.int64)
    x = utt.features[None]
    lengths = np.array([utt.n_frames])

    was_training = model.training
    model.eval()
    model.record_attention(True)
    try:
        with no_grad():
            if teacher is not None:
                per_token, _, _ = teacher.embed_batch([utt.z])
                out = model.encode(x, lengths, teacher_per_token=per_token, branch="word")
            else:
                out = model.encode(x, lengths)
            model.decode_forward(prefix, out.h_se, lengths)
        maps = {name: weights[0] for name, weights in model.attention_maps().items()}
    finally:
        model.record_attention(False)
        model.train(was_training)
    return maps


def export_attention(
    path: Union[str, Path],
    model: LutModel,
    utt: Utterance,
    tgt_vocab: Vocab,
    teacher: Optional[TeacherModel] = None,
    seed: Optional[int] = None,
) -> Path:
    maps = collect_attention(model, utt, tgt_vocab, teacher)
    metadata = {"tag": ATTENTION_TAG, "utt_id": utt.utt_id, "layers": sorted(maps), "seed": seed}
    logger.info("Exporting %d attention maps for %s", len(maps), utt.utt_id)
    return save_container(path, maps, metadata)
