"""
Entry point dòng lệnh: gen-data, train-teacher, train, average, decode, evaluate,
probe, sweep, export-attention.

Thứ tự override config: file < --set section.key=value < flag riêng
(--seed/--branch/--mode/--beam) < biến môi trường LUT_SEED.
Mã thoát: 0 thành công, 1 lỗi có kiểu, 2 lỗi tham số (argparse).
"""
import argparse
import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.tensor import set_default_dtype
from src.data.featurize import FeatureConfig, FeatureNormalizer, featurize_corpus
from src.data.generate_corpus import CorpusSpec, build_vocabs, generate_corpus, split_corpus
from src.data.manifest import read_manifest, write_manifest
from src.data.spec_augment import AugmentConfig
from src.data.utterance import Utterance
from src.data.vocab import Vocab
from src.evaluation.attention_export import export_attention
from src.evaluation.probing import ProbeConfig, probe_model
from src.evaluation.report import evaluate_corpus, write_decodes, write_report
from src.evaluation.search import DecodeConfig, translate_all
from src.evaluation.sweep import SWEEP_AXES, SweepConfig, SweepRow, aggregate_sweep, format_table, run_sweep, write_sweep
from src.model.lut_model import LutModel
from src.model.model_config import BRANCH_MODES, ModelConfig
from src.teacher.teacher_model import TeacherConfig, TeacherModel, load_teacher, save_teacher
from src.teacher.train_teacher import train_teacher
from src.training.checkpoints import checkpoint_paths, load_checkpoint, model_hash, save_averaged
from src.training.schedule import Schedule
from src.training.semi_supervised import TRAIN_MODES, TrainPlan, TrainResult, evaluate_dev, run_semi_supervised
from src.utils.config import apply_overrides, dataclass_from_dict, env_seed, load_config
from src.utils.errors import ConfigError, EmptyInputError, LutError
from src.utils.logger import get_logger

logger = get_logger("lut")

DEFAULT_CONFIG = "config/config.yaml"
DTYPES = ("float64", "float32")


@dataclass
class ProjectConfig:
    name: str = "lut_st"
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ConfigError(f"project.dtype must be one of {DTYPES}, got {self.dtype!r}")


@dataclass
class PathsConfig:
    data_dir: str = "artifacts/data"
    teacher: str = "artifacts/teacher/teacher.lut"
    run_dir: str = "artifacts/run"
    out_dir: str = "artifacts/out"
    asr_manifest: Optional[str] = None

    @property
    def train_manifest(self) -> Path:
        return Path(self.data_dir) / "train.jsonl"

    @property
    def dev_manifest(self) -> Path:
        return Path(self.data_dir) / "dev.jsonl"

    @property
    def test_manifest(self) -> Path:
        return Path(self.data_dir) / "test.jsonl"

    @property
    def final_checkpoint(self) -> Path:
        return Path(self.run_dir) / "final.lut"


SECTIONS = {
    "project": ProjectConfig,
    "data": CorpusSpec,
    "features": FeatureConfig,
    "augment": AugmentConfig,
    "model": ModelConfig,
    "teacher": TeacherConfig,
    "schedule": Schedule,
    "train": TrainPlan,
    "decode": DecodeConfig,
    "probe": ProbeConfig,
    "sweep": SweepConfig,
    "paths": PathsConfig,
}


@dataclass
class RunConfig:
    project: ProjectConfig = field(default_factory=ProjectConfig)
    data: CorpusSpec = field(default_factory=CorpusSpec)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    schedule: Schedule = field(default_factory=Schedule)
    train: TrainPlan = field(default_factory=TrainPlan)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @property
    def seed(self) -> int:
        return self.project.seed

    def vocabs(self):
        return build_vocabs(self.data)

    def filled_model(self) -> ModelConfig:
        """ModelConfig với input_dim / n_ctc_labels / tgt_vocab_size suy ra từ data + features."""
        src_vocab, tgt_vocab = self.vocabs()
        return dataclasses.replace(
            self.model,
            input_dim=self.features.output_dim(self.data.feature_dim),
            n_ctc_labels=len(src_vocab.ctc_label_ids()),
            tgt_vocab_size=len(tgt_vocab),
        )

    def expected_hash(self) -> str:
        src_vocab, tgt_vocab = self.vocabs()
        return model_hash(self.filled_model(), src_vocab, tgt_vocab, self.features)

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}


def _seeded(sections: Dict[str, Dict[str, Any]], seed: int) -> Dict[str, Dict[str, Any]]:
    # seed gốc chảy xuống mọi section có trường seed
    for name in ("data", "model", "teacher", "train", "probe"):
        sections.setdefault(name, {})
        sections[name]["seed"] = seed
    return sections


def build_run_config(
    raw: Optional[Dict[str, Any]] = None,
    overrides: Sequence[str] = (),
    flags: Optional[Dict[str, Dict[str, Any]]] = None,
    use_env: bool = True,
) -> RunConfig:
    """use_env=False: bỏ qua LUT_SEED (các hàng sweep tự đặt seed)."""
    raw = dict(raw or {})
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown config sections: {sorted(unknown)}")
    merged = apply_overrides(raw, overrides)
    for section, values in (flags or {}).items():
        merged.setdefault(section, {})
        merged[section] = {**(merged[section] or {}), **values}

    seed = env_seed() if use_env else None
    if seed is not None:
        logger.info("Seed overridden by environment: %d", seed)
        merged.setdefault("project", {})
        merged["project"] = {**(merged["project"] or {}), "seed": seed}
    root_seed = int((merged.get("project") or {}).get("seed", ProjectConfig.seed))
    merged = _seeded({k: dict(v or {}) for k, v in merged.items()}, root_seed)

    return RunConfig(**{name: dataclass_from_dict(cls, merged.get(name), name) for name, cls in SECTIONS.items()})


# -------------------------------------------------------------------
# dữ liệu
# -------------------------------------------------------------------
@dataclass
class DataBundle:
    train: List[Utterance]
    dev: List[Utterance]
    test: List[Utterance]
    asr: List[Utterance]
    src_vocab: Vocab
    tgt_vocab: Vocab
    normalizer: Optional[FeatureNormalizer]


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise ConfigError(f"{what} not found: {path}")
    return Path(path)


def load_bundle(cfg: RunConfig, need_asr: bool = False) -> DataBundle:
    src_vocab, tgt_vocab = cfg.vocabs()
    paths = cfg.paths
    train = read_manifest(_require(paths.train_manifest, "train manifest"), src_vocab, tgt_vocab)
    dev = read_manifest(paths.dev_manifest, src_vocab, tgt_vocab) if paths.dev_manifest.exists() else []
    test = read_manifest(paths.test_manifest, src_vocab, tgt_vocab) if paths.test_manifest.exists() else []
    asr: List[Utterance] = []
    if need_asr:
        if not paths.asr_manifest:
            raise ConfigError("mode=expanded needs paths.asr_manifest (ASR-pair set A)")
        asr = read_manifest(_require(Path(paths.asr_manifest), "ASR manifest"), src_vocab, tgt_vocab)
    if not train:
        raise EmptyInputError(f"Train manifest {paths.train_manifest} is empty")

    train, (dev, test, asr), normalizer = featurize_corpus(train, cfg.features, others=[dev, test, asr])
    return DataBundle(train, dev, test, asr, src_vocab, tgt_vocab, normalizer)


def load_eval_set(cfg: RunConfig, manifest: Optional[str], normalizer, src_vocab, tgt_vocab) -> List[Utterance]:
    path = Path(manifest) if manifest else cfg.paths.test_manifest
    utts = read_manifest(_require(path, "manifest"), src_vocab, tgt_vocab)
    if not utts:
        return []
    utts, _, _ = featurize_corpus(utts, cfg.features, normalizer=normalizer)
    return utts


def obtain_teacher(cfg: RunConfig, bundle: DataBundle) -> TeacherModel:
    """Nạp teacher từ paths.teacher; chế độ table mà chưa có file thì dựng tại chỗ."""
    path = Path(cfg.paths.teacher)
    if path.exists():
        teacher = load_teacher(path)
    elif cfg.teacher.mode == "table":
        teacher, _ = train_teacher([u.z for u in bundle.train], bundle.src_vocab, cfg.model.d_model, cfg.teacher)
    else:
        raise ConfigError(f"Teacher checkpoint not found: {path}; run train-teacher first")
    if teacher.d_model != cfg.model.d_model:
        raise ConfigError(f"teacher d_model={teacher.d_model} != model.d_model={cfg.model.d_model}")
    if teacher.vocab != bundle.src_vocab:
        raise ConfigError("teacher vocabulary differs from the source vocabulary")
    return teacher


def train_model(cfg: RunConfig, bundle: DataBundle, teacher: TeacherModel, out_dir: Optional[Path]) -> TrainResult:
    model = LutModel(cfg.filled_model())
    logger.info("Model built: %d parameters", model.num_parameters())
    return run_semi_supervised(
        cfg.train, model, teacher, bundle.train, bundle.src_vocab, bundle.tgt_vocab,
        asr_pairs=bundle.asr, dev=bundle.dev, schedule=cfg.schedule, augment=cfg.augment,
        out_dir=out_dir, normalizer=bundle.normalizer, features=cfg.features,
    )


def _load_model(cfg: RunConfig, checkpoint: Optional[str]):
    path = _require(Path(checkpoint) if checkpoint else cfg.paths.final_checkpoint, "checkpoint")
    return load_checkpoint(path, expected_hash=cfg.expected_hash())


def _write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str), encoding="utf-8")
    return path


# -------------------------------------------------------------------
# các lệnh
# -------------------------------------------------------------------
def cmd_gen_data(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out or cfg.paths.data_dir)
    logger.info("=== START GEN DATA | out=%s seed=%d ===", out_dir, cfg.data.seed)
    corpus = generate_corpus(cfg.data)
    train, dev, test = split_corpus(corpus.utterances, cfg.data.dev_fraction, cfg.data.test_fraction, cfg.data.seed)
    for name, utts in (("train", train), ("dev", dev), ("test", test)):
        write_manifest(out_dir / f"{name}.jsonl", utts, corpus.src_vocab, corpus.tgt_vocab)
    if corpus.asr_utterances:
        write_manifest(out_dir / "asr.jsonl", corpus.asr_utterances, corpus.src_vocab, corpus.tgt_vocab)
    corpus.src_vocab.save(out_dir / "src_vocab.txt")
    corpus.tgt_vocab.save(out_dir / "tgt_vocab.txt")
    _write_json(out_dir / "data_spec.json", {"data": asdict(cfg.data), "seed": cfg.seed})
    logger.info("=== GEN DATA SUCCESS | train=%d dev=%d test=%d asr=%d ===",
                len(train), len(dev), len(test), len(corpus.asr_utterances))
    return 0


def cmd_train_teacher(cfg: RunConfig, args) -> int:
    src_vocab, tgt_vocab = cfg.vocabs()
    train = read_manifest(_require(cfg.paths.train_manifest, "train manifest"), src_vocab, tgt_vocab)
    dev_path = cfg.paths.dev_manifest
    heldout = [u.z for u in read_manifest(dev_path, src_vocab, tgt_vocab)] if dev_path.exists() else None
    sequences = [u.z for u in train]
    if cfg.paths.asr_manifest and Path(cfg.paths.asr_manifest).exists():
        sequences += [u.z for u in read_manifest(cfg.paths.asr_manifest, src_vocab, tgt_vocab)]
    teacher, report = train_teacher(sequences, src_vocab, cfg.model.d_model, cfg.teacher, heldout=heldout)
    path = Path(args.out) / "teacher.lut" if args.out else Path(cfg.paths.teacher)
    save_teacher(path, teacher)
    _write_json(path.with_suffix(".json"), {**asdict(report), "seed": cfg.seed})
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    bundle = load_bundle(cfg, need_asr=cfg.train.mode == "expanded")
    teacher = obtain_teacher(cfg, bundle)
    out_dir = Path(args.out or cfg.paths.run_dir)
    result = train_model(cfg, bundle, teacher, out_dir)
    _write_json(out_dir / "run_config.json", {**cfg.to_dict(), "config_hash": cfg.expected_hash()})
    _write_json(out_dir / "train_summary.json", {
        "counters": asdict(result.counters),
        "best_dev_loss": result.best_dev_loss,
        "stopped_early": result.stopped_early,
        "dev_history": result.dev_history,
        "seed": cfg.seed,
    })
    return 0


def cmd_average(cfg: RunConfig, args) -> int:
    """Dựng lại final.lut từ K file ckpt_<step>.lut cuối trong run_dir."""
    run_dir = Path(cfg.paths.run_dir)
    last_k = args.last or cfg.train.average_last_k
    paths = checkpoint_paths(run_dir)[-last_k:]
    if not paths:
        raise EmptyInputError(f"No ckpt_<step>.lut files in {run_dir}")
    out = Path(args.checkpoint) if args.checkpoint else cfg.paths.final_checkpoint
    save_averaged(paths, out)
    logger.info("Wrote %s from %s", out, [p.name for p in paths])
    return 0


def cmd_decode(cfg: RunConfig, args) -> int:
    model, src_vocab, tgt_vocab, normalizer, _ = _load_model(cfg, args.checkpoint)
    utts = load_eval_set(cfg, args.manifest, normalizer, src_vocab, tgt_vocab)
    out = Path(args.out or cfg.paths.out_dir) / "decodes.jsonl"
    if not utts:
        logger.warning("Nothing to decode; writing empty %s", out)
        write_decodes(out, [], [])
        return 0
    hyps = translate_all(model, [u.features for u in utts], tgt_vocab, cfg.decode)
    write_decodes(out, [u.utt_id for u in utts], [tgt_vocab.decode(h) for h in hyps])
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model, src_vocab, tgt_vocab, normalizer, _ = _load_model(cfg, args.checkpoint)
    utts = load_eval_set(cfg, args.manifest, normalizer, src_vocab, tgt_vocab)
    if not utts:
        logger.warning("Nothing to evaluate: manifest is empty")
        return 0
    report = evaluate_corpus(model, utts, src_vocab, tgt_vocab, cfg.decode)
    write_report(report, Path(args.out or cfg.paths.out_dir))
    print(json.dumps(report.summary(), indent=2))
    return 0


def cmd_probe(cfg: RunConfig, args) -> int:
    model, src_vocab, tgt_vocab, normalizer, _ = _load_model(cfg, args.checkpoint)
    utts = load_eval_set(cfg, args.manifest, normalizer, src_vocab, tgt_vocab)
    if not utts:
        raise EmptyInputError("Probing needs a non-empty manifest")
    tasks = ("speaker", "intent") if args.task == "both" else (args.task,)
    results = [r for task in tasks for r in probe_model(model, utts, src_vocab, task, cfg.probe)]
    table = pd.DataFrame([asdict(r) for r in results])
    out_dir = Path(args.out or cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_parquet(out_dir / "probe.parquet", index=False, engine="pyarrow")
    print(table.to_string(index=False))
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    bundle = load_bundle(cfg, need_asr=cfg.train.mode == "expanded")
    teacher = obtain_teacher(cfg, bundle)
    raw = cfg.to_dict()

    def run_one(row: SweepRow, seed: int) -> Dict[str, float]:
        sections = {k: dict(v) for k, v in raw.items()}
        for section, values in row.overrides.items():
            sections[section].update(values)
        sections["project"]["seed"] = seed
        if cfg.sweep.max_steps is not None:
            sections["train"]["max_steps"] = cfg.sweep.max_steps
        run_cfg = build_run_config(sections, use_env=False)
        result = train_model(run_cfg, bundle, teacher, out_dir=None)
        dev = evaluate_dev(result.model, teacher, bundle.dev or bundle.train, bundle.src_vocab,
                           bundle.tgt_vocab, run_cfg.train.frames_budget)
        metrics = {"dev_token_accuracy": dev.token_accuracy, "dev_loss": dev.loss}
        eval_set = bundle.test or bundle.dev
        if eval_set:
            report = evaluate_corpus(result.model, eval_set, bundle.src_vocab, bundle.tgt_vocab,
                                     DecodeConfig(beam=1, char_level=cfg.decode.char_level))
            metrics.update({"bleu": report.corpus_bleu, "wer": report.corpus_wer})
        return metrics

    runs = run_sweep(args.axis, run_one, cfg.sweep, base_weights=cfg.model.weights)
    summary = aggregate_sweep(runs)
    write_sweep(runs, summary, Path(args.out or cfg.paths.out_dir), args.axis)
    print(format_table(summary))
    return 0


def cmd_export_attention(cfg: RunConfig, args) -> int:
    model, src_vocab, tgt_vocab, normalizer, _ = _load_model(cfg, args.checkpoint)
    utts = load_eval_set(cfg, args.manifest, normalizer, src_vocab, tgt_vocab)
    match = [u for u in utts if u.utt_id == args.utt_id]
    if not match:
        raise ConfigError(f"Utterance {args.utt_id!r} not found in manifest")
    teacher_path = Path(cfg.paths.teacher)
    teacher = load_teacher(teacher_path) if teacher_path.exists() else None
    out = Path(args.out or cfg.paths.out_dir) / f"attention_{args.utt_id}.lut"
    export_attention(out, model, match[0], tgt_vocab, teacher=teacher, seed=cfg.seed)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-teacher": cmd_train_teacher,
    "train": cmd_train,
    "average": cmd_average,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "export-attention": cmd_export_attention,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="YAML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="root seed for every random stream")
    common.add_argument("--out", help="output directory")

    model_flags = argparse.ArgumentParser(add_help=False)
    model_flags.add_argument("--checkpoint", help="LUT checkpoint (default: paths.run_dir/final.lut)")
    model_flags.add_argument("--manifest", help="utterance manifest (default: test split)")

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--branch", choices=BRANCH_MODES, help="semantic distance branch")
    train_flags.add_argument("--mode", choices=TRAIN_MODES, help="base or expanded setting")

    parser = argparse.ArgumentParser(prog="lut", description="LUT speech translation on a synthetic corpus")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate the synthetic corpus and manifests")
    sub.add_parser("train-teacher", parents=[common], help="train and freeze the text teacher")
    sub.add_parser("train", parents=[common, train_flags], help="semi-supervised LUT training")
    average = sub.add_parser("average", parents=[common], help="average the last K checkpoints into final.lut")
    average.add_argument("--last", type=int, help="number of checkpoints (default: train.average_last_k)")
    average.add_argument("--checkpoint", help="output path (default: paths.run_dir/final.lut)")
    decode = sub.add_parser("decode", parents=[common, model_flags], help="translate a manifest")
    decode.add_argument("--beam", type=int, help="beam size (1 = greedy)")
    evaluate = sub.add_parser("evaluate", parents=[common, model_flags], help="BLEU / WER / correlation report")
    evaluate.add_argument("--beam", type=int, help="beam size (1 = greedy)")
    probe = sub.add_parser("probe", parents=[common, model_flags], help="speaker / intent probing")
    probe.add_argument("--task", choices=("speaker", "intent", "both"), default="both")
    sweep = sub.add_parser("sweep", parents=[common, train_flags], help="ablation sweep")
    sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    attention = sub.add_parser("export-attention", parents=[common, model_flags], help="dump attention maps")
    attention.add_argument("--utt-id", required=True)
    return parser


def _flag_overrides(args) -> Dict[str, Dict[str, Any]]:
    flags: Dict[str, Dict[str, Any]] = {}
    if args.seed is not None:
        flags.setdefault("project", {})["seed"] = args.seed
    if getattr(args, "branch", None):
        flags.setdefault("model", {})["branch"] = args.branch
    if getattr(args, "mode", None):
        flags.setdefault("train", {})["mode"] = args.mode
    if getattr(args, "beam", None) is not None:
        flags.setdefault("decode", {})["beam"] = args.beam
    return flags


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_run_config(load_config(args.config), args.overrides, _flag_overrides(args))
        set_default_dtype(np.dtype(cfg.project.dtype))
        logger.info("=== START %s | config=%s seed=%d ===", args.command.upper(), args.config, cfg.seed)
        code = COMMANDS[args.command](cfg, args)
        logger.info("=== %s SUCCESS ===", args.command.upper())
        return code
    except (LutError, FileNotFoundError, ValueError):
        logger.exception("Command %s failed", args.command)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
