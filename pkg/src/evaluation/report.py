"""
Đánh giá một tập ST: dịch (greedy/beam), phiên âm CTC greedy, BLEU corpus,
WER corpus, điểm từng câu và tương quan Pearson giữa WER và BLEU câu.

Đầu ra: <stem>.jsonl (từng utterance) + <stem>_summary.json + <stem>_scatter.parquet.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from src.core.tensor import no_grad
from src.ctc.greedy_decode import ctc_greedy_decode_batch
from src.data.batching import collate, make_batches
from src.data.utterance import Utterance
from src.data.validate_schema import validate_dataframe_schema
from src.data.vocab import Vocab
from src.evaluation.metrics import bleu, corpus_wer, pearson, sentence_bleu, wer
from src.evaluation.search import DecodeConfig, translate
from src.model.lut_model import LutModel
from src.utils.checkpoint_utils import write_bytes
from src.utils.errors import EmptyInputError, UndefinedCorrelationError
from src.utils.logger import get_logger

logger = get_logger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parents[2] / "schemas" / "eval_report.yaml"

PathLike = Union[str, Path]


@dataclass
class UtteranceScore:
    utt_id: str
    reference: str
    hypothesis: str
    transcript: str
    wer: float
    sentence_bleu: float


@dataclass
class EvalReport:
    corpus_bleu: float
    corpus_wer: float
    pearson_r: Optional[float]          # None khi không xác định (hằng số / < 2 câu)
    n_utterances: int
    beam: int
    char_level: bool = False
    utterances: List[UtteranceScore] = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("utterances")
        return out

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(u) for u in self.utterances], columns=list(UtteranceScore.__dataclass_fields__))


def ctc_transcripts(
    model: LutModel, utterances: Sequence[Utterance], src_vocab: Vocab, frames_budget: int = 4000
) -> dict:
    """utt_id -> id token nguồn từ CTC greedy trên encoder âm học."""
    out = {}
    was_training = model.training
    model.eval()
    with no_grad():
        for group in make_batches(utterances, max(frames_budget, max(u.n_frames for u in utterances)), 0, False):
            batch = collate(group, src_vocab, src_vocab, drop_translation=True)
            _, log_probs = model.acoustic_encode(batch.features, batch.frame_lengths)
            labels = ctc_greedy_decode_batch(log_probs, batch.frame_lengths)
            for utt_id, seq in zip(batch.utt_ids, labels):
                out[utt_id] = src_vocab.from_ctc(seq)
    model.train(was_training)
    return out


def evaluate_corpus(
    model: LutModel,
    utterances: Sequence[Utterance],
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    cfg: Optional[DecodeConfig] = None,
) -> EvalReport:
    cfg = cfg or DecodeConfig()
    st = [u for u in utterances if u.y is not None]
    if len(st) < len(utterances):
        logger.warning("Skipping %d utterances without a reference translation", len(utterances) - len(st))
    if not st:
        raise EmptyInputError("Evaluation needs at least one utterance with a reference translation")

    logger.info("=== START EVALUATE | utterances=%d beam=%d char_level=%s ===", len(st), cfg.beam, cfg.char_level)
    transcripts = ctc_transcripts(model, st, src_vocab)
    refs, hyps, z_refs, z_hyps, scores = [], [], [], [], []
    for utt in st:
        hyp_ids = translate(model, utt.features, tgt_vocab, cfg)
        ref_tokens, hyp_tokens = tgt_vocab.decode(utt.y), tgt_vocab.decode(hyp_ids)
        z_tokens, t_tokens = src_vocab.decode(utt.z), src_vocab.decode(transcripts[utt.utt_id])
        refs.append(ref_tokens)
        hyps.append(hyp_tokens)
        z_refs.append(z_tokens)
        z_hyps.append(t_tokens)
        scores.append(UtteranceScore(
            utt_id=utt.utt_id,
            reference=" ".join(ref_tokens),
            hypothesis=" ".join(hyp_tokens),
            transcript=" ".join(t_tokens),
            wer=wer(z_tokens, t_tokens),
            sentence_bleu=sentence_bleu(ref_tokens, hyp_tokens, char_level=cfg.char_level),
        ))

    try:
        r = pearson([s.wer for s in scores], [s.sentence_bleu for s in scores])
    except UndefinedCorrelationError as exc:
        logger.warning("WER/BLEU correlation undefined: %s", exc)
        r = None

    report = EvalReport(
        corpus_bleu=bleu(refs, hyps, char_level=cfg.char_level),
        corpus_wer=corpus_wer(z_refs, z_hyps),
        pearson_r=r,
        n_utterances=len(scores),
        beam=cfg.beam,
        char_level=cfg.char_level,
        utterances=scores,
    )
    logger.info(
        "=== EVALUATE SUCCESS | BLEU=%.2f WER=%.4f r=%s ===",
        report.corpus_bleu, report.corpus_wer, "n/a" if r is None else f"{r:.4f}",
    )
    return report


def write_report(report: EvalReport, out_dir: PathLike, stem: str = "eval", strict: bool = True) -> Path:
    """Kiểm tra schema rồi ghi JSONL + summary JSON + parquet scatter (wer, sentence_bleu)."""
    out_dir = Path(out_dir)
    df = report.frame()
    validate_dataframe_schema(df, str(SCHEMA_PATH), strict=strict)

    lines = [json.dumps(asdict(u), sort_keys=True) for u in report.utterances]
    write_bytes(("\n".join(lines) + "\n").encode("utf-8"), out_dir / f"{stem}.jsonl")
    write_bytes(json.dumps(report.summary(), indent=2, sort_keys=True).encode("utf-8"), out_dir / f"{stem}_summary.json")

    scatter = out_dir / f"{stem}_scatter.parquet"
    df[["utt_id", "wer", "sentence_bleu"]].to_parquet(scatter, index=False, engine="pyarrow")
    logger.info("Wrote evaluation report to %s (%d rows)", out_dir, len(df))
    return out_dir / f"{stem}.jsonl"


def write_decodes(path: PathLike, utt_ids: Sequence[str], hypotheses: Sequence[Sequence[str]]) -> Path:
    """{utt_id, hypothesis} mỗi dòng; danh sách rỗng -> file rỗng."""
    path = Path(path)
    lines = [json.dumps({"utt_id": u, "hypothesis": " ".join(h)}) for u, h in zip(utt_ids, hypotheses)]
    write_bytes(("\n".join(lines) + ("\n" if lines else "")).encode("utf-8"), path)
    logger.info("Wrote %d decodes to %s", len(lines), path)
    return path


