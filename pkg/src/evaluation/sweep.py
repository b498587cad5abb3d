"""
Sweep ablation: mỗi trục là một tập hàng override config; mỗi hàng chạy với
nhiều seed, kết quả gộp (median theo seed) bằng duckdb.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import duckdb
import pandas as pd

from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

SWEEP_AXES = ("layers", "loss-weights", "depth", "branch", "ablation")

# (N_ae, N_se) với tổng cố định
LAYER_ROWS = ((2, 6), (3, 5), (4, 4), (5, 3), (6, 2))
# (alpha, beta, gamma)
WEIGHT_ROWS = (
    (0.50, 0.05, 0.45),
    (0.40, 0.20, 0.40),
    (0.30, 0.40, 0.30),
    (0.20, 0.05, 0.75),
    (0.20, 0.60, 0.20),
    (0.80, 0.05, 0.15),
)
# (N_ae, N_se, N_td), encoder cân bằng
DEPTH_ROWS = ((6, 6, 6), (6, 6, 4), (5, 5, 4), (4, 4, 4), (3, 3, 4), (2, 2, 4))

Overrides = Dict[str, Dict[str, Any]]


@dataclass
class SweepConfig:
    seeds: Tuple[int, ...] = (0, 1, 2)
    max_steps: Optional[int] = None      # None -> giữ train.max_steps

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("sweep.seeds must not be empty")


@dataclass
class SweepRow:
    ordinal: int
    name: str
    overrides: Overrides = field(default_factory=dict)


def sweep_rows(axis: str, base_weights: Tuple[float, float, float] = (0.5, 0.05, 0.45)) -> List[SweepRow]:
    if axis == "layers":
        return [
            SweepRow(i, f"ae{ae}_se{se}", {"model": {"n_ae": ae, "n_se": se}})
            for i, (ae, se) in enumerate(LAYER_ROWS)
        ]
    if axis == "loss-weights":
        return [
            SweepRow(i, f"a{a:.2f}_b{b:.2f}_g{g:.2f}", {"model": {"alpha": a, "beta": b, "gamma": g}})
            for i, (a, b, g) in enumerate(WEIGHT_ROWS)
        ]
    if axis == "depth":
        return [
            SweepRow(i, f"ae{ae}_se{se}_td{td}", {"model": {"n_ae": ae, "n_se": se, "n_td": td}})
            for i, (ae, se, td) in enumerate(DEPTH_ROWS)
        ]
    if axis == "branch":
        return [SweepRow(i, b, {"model": {"branch": b}}) for i, b in enumerate(("seq", "word"))]
    if axis == "ablation":
        alpha, beta, gamma = base_weights
        return [
            SweepRow(0, "full", {"model": {"alpha": alpha, "beta": beta, "gamma": gamma}}),
            SweepRow(1, "no_distance", {"model": {"alpha": alpha, "beta": 0.0, "gamma": gamma}}),
            SweepRow(2, "no_ctc", {"model": {"alpha": 0.0, "beta": beta, "gamma": gamma}}),
            # không còn L_ae, L_se -> bỏ Step 1
            SweepRow(3, "translation_only", {"model": {"alpha": 0.0, "beta": 0.0, "gamma": 1.0},
                                             "train": {"ratio": (0, 1)}}),
        ]
    raise ConfigError(f"Unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def run_sweep(
    axis: str,
    run_one: Callable[[SweepRow, int], Dict[str, float]],
    cfg: Optional[SweepConfig] = None,
    base_weights: Tuple[float, float, float] = (0.5, 0.05, 0.45),
) -> pd.DataFrame:
    """run_one(row, seed) -> dict metric; trả về bảng thô (một dòng / hàng x seed)."""
    cfg = cfg or SweepConfig()
    rows = sweep_rows(axis, base_weights)
    logger.info("=== START SWEEP | axis=%s rows=%d seeds=%s ===", axis, len(rows), list(cfg.seeds))
    records = []
    for row in rows:
        for seed in cfg.seeds:
            metrics = run_one(row, seed)
            records.append({"axis": axis, "ordinal": row.ordinal, "row": row.name, "seed": seed, **metrics})
            logger.info("sweep %s row=%s seed=%d -> %s", axis, row.name, seed, metrics)
    logger.info("=== SWEEP SUCCESS | %d runs ===", len(records))
    return pd.DataFrame(records)


def aggregate_sweep(runs: pd.DataFrame) -> pd.DataFrame:
    """Median mọi cột metric theo (axis, ordinal, row), giữ thứ tự hàng."""
    if runs.empty:
        return runs
    keys = ("axis", "ordinal", "row", "seed")
    metrics = [c for c in runs.columns if c not in keys and pd.api.types.is_numeric_dtype(runs[c])]
    select = ", ".join(f'median("{m}") AS "{m}"' for m in metrics)
    con = duckdb.connect()
    try:
        con.register("runs", runs)
        return con.execute(f"""
            SELECT axis, ordinal, row, COUNT(*) AS n_seeds{', ' + select if select else ''}
            FROM runs
            GROUP BY axis, ordinal, row
            ORDER BY ordinal
        """).df()
    finally:
        con.close()


def write_sweep(runs: pd.DataFrame, summary: pd.DataFrame, out_dir: Union[str, Path], axis: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = axis.replace("-", "_")
    runs.to_parquet(out_dir / f"sweep_{stem}_runs.parquet", index=False, engine="pyarrow")
    path = out_dir / f"sweep_{stem}.parquet"
    summary.to_parquet(path, index=False, engine="pyarrow")
    logger.info("Wrote sweep tables to %s", out_dir)
    return path


def format_table(summary: pd.DataFrame, columns: Optional[Sequence[str]] = None) -> str:
    if summary.empty:
        return "(no rows)"
    columns = list(columns) if columns else [c for c in summary.columns if c not in ("axis", "ordinal")]
    return summary[columns].to_string(index=False, float_format=lambda v: f"{v:.4f}")
