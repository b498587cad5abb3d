"""
Phân tích kết quả chạy bằng duckdb:
- train_log.jsonl: loss trung bình theo step_kind và theo cửa sổ step
- sweep_*.parquet: bảng median theo hàng

    python -m scripts.duckdb_analysis --run-dir artifacts/run --out-dir artifacts/out
"""
import argparse
from pathlib import Path

import duckdb

from src.utils.logger import get_logger

logger = get_logger("duckdb_analysis")


def create_train_views(con: duckdb.DuckDBPyConnection, run_dir: Path) -> bool:
    log_path = run_dir / "train_log.jsonl"
    if not log_path.exists() or log_path.stat().st_size == 0:
        logger.warning("No training log at %s", log_path)
        return False
    con.execute(f"""
    CREATE OR REPLACE VIEW v_train_log AS
    SELECT *
    FROM read_json_auto('{log_path.as_posix()}', format='newline_delimited')
    """)
    return True


def loss_by_step_kind(con: duckdb.DuckDBPyConnection):
    # -- Grain: 1 row per step_kind
    return con.execute("""
    SELECT
        step_kind,
        COUNT(*)                     AS updates,
        ROUND(AVG(L_ae), 4)          AS avg_L_ae,
        ROUND(AVG(L_se), 4)          AS avg_L_se,
        ROUND(AVG(L_td), 4)          AS avg_L_td,
        ROUND(AVG(L_total), 4)       AS avg_L_total
    FROM v_train_log
    WHERE step_kind IS NOT NULL
    GROUP BY step_kind
    ORDER BY step_kind
    """).df()


def loss_by_window(con: duckdb.DuckDBPyConnection, window: int):
    # -- Grain: 1 row per cửa sổ `window` step
    return con.execute(f"""
    SELECT
        (step // {int(window)}) * {int(window)} AS window_start,
        ROUND(AVG(L_total), 4)                  AS avg_L_total,
        ROUND(MAX(lr), 8)                       AS max_lr
    FROM v_train_log
    WHERE step_kind IS NOT NULL
    GROUP BY window_start
    ORDER BY window_start
    """).df()


def sweep_tables(con: duckdb.DuckDBPyConnection, out_dir: Path) -> None:
    for path in sorted(out_dir.glob("sweep_*.parquet")):
        if path.stem.endswith("_runs"):
            continue
        table = con.execute(f"SELECT * FROM read_parquet('{path.as_posix()}') ORDER BY ordinal").df()
        print(f"\n# {path.stem}")
        print(table.to_string(index=False))


def main() -> None:
    parser = argparse.ArgumentParser(description="Summarise LUT training logs and sweep tables")
    parser.add_argument("--run-dir", default="artifacts/run")
    parser.add_argument("--out-dir", default="artifacts/out")
    parser.add_argument("--window", type=int, default=500)
    args = parser.parse_args()

    con = duckdb.connect()
    try:
        if create_train_views(con, Path(args.run_dir)):
            print("# loss by step kind")
            print(loss_by_step_kind(con).to_string(index=False))
            print(f"\n# loss by {args.window}-step window")
            print(loss_by_window(con, args.window).to_string(index=False))
        out_dir = Path(args.out_dir)
        if out_dir.exists():
            sweep_tables(con, out_dir)
    finally:
        con.close()
    logger.info("Analysis finished")


if __name__ == "__main__":
    main()
