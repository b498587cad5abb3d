"""
Chạy trọn pipeline LUT trên corpus tổng hợp:
gen-data -> train-teacher -> train -> evaluate.

    python -m scripts.run_pipeline --config config/config.yaml --set train.max_steps=200
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from src.cli import DEFAULT_CONFIG, main
from src.utils.logger import get_logger

logger = get_logger("run_pipeline")

STAGES = ("gen-data", "train-teacher", "train", "evaluate")


def _stage_args(stage: str, config: str, overrides: Sequence[str], seed: Optional[int]) -> List[str]:
    argv = [stage, "--config", config]
    for item in overrides:
        argv += ["--set", item]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return argv


def run_pipeline(
    config: str = DEFAULT_CONFIG,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    skip: Sequence[str] = (),
) -> None:
    if not Path(config).exists():
        logger.error("Config file not found: %s", config)
        sys.exit(1)

    logger.info("=== START LUT PIPELINE | config=%s | stages=%s ===", config, [s for s in STAGES if s not in skip])
    for stage in STAGES:
        if stage in skip:
            logger.info("Skipping stage %s", stage)
            continue
        code = main(_stage_args(stage, config, overrides, seed))
        if code != 0:
            logger.error("Stage %s failed with exit code %d", stage, code)
            sys.exit(code)
    logger.info("=== LUT PIPELINE SUCCESS ===")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the full LUT pipeline")
    parser.add_argument("--config", default=DEFAULT_CONFIG)
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--skip", action="append", default=[], choices=STAGES)
    args = parser.parse_args()
    run_pipeline(args.config, args.overrides, args.seed, args.skip)
