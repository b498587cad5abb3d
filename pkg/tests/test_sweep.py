import pandas as pd
import pytest

from src.evaluation.sweep import (
    SweepConfig,
    aggregate_sweep,
    format_table,
    run_sweep,
    sweep_rows,
    write_sweep,
)
from src.utils.errors import ConfigError


def test_row_counts_per_axis():
    assert len(sweep_rows("layers")) == 5
    assert len(sweep_rows("loss-weights")) == 6
    assert len(sweep_rows("depth")) == 6
    assert [r.name for r in sweep_rows("branch")] == ["seq", "word"]
    with pytest.raises(ConfigError):
        sweep_rows("width")


def test_layer_rows_keep_total_depth():
    for row in sweep_rows("layers"):
        model = row.overrides["model"]
        assert model["n_ae"] + model["n_se"] == 8


def test_loss_weight_rows_sum_to_one():
    for row in sweep_rows("loss-weights"):
        w = row.overrides["model"]
        assert w["alpha"] + w["beta"] + w["gamma"] == pytest.approx(1.0)


def test_ablation_rows():
    rows = {r.name: r.overrides for r in sweep_rows("ablation", base_weights=(0.5, 0.05, 0.45))}
    assert rows["no_distance"]["model"]["beta"] == 0.0
    assert rows["no_ctc"]["model"]["alpha"] == 0.0
    assert rows["translation_only"]["train"]["ratio"] == (0, 1)


def test_run_and_aggregate_median():
    runs = run_sweep("layers", lambda row, seed: {"bleu": float(row.ordinal + seed * seed)}, SweepConfig(seeds=(0, 1, 2)))
    assert len(runs) == 15
    summary = aggregate_sweep(runs)
    assert list(summary["ordinal"]) == [0, 1, 2, 3, 4]
    assert list(summary["n_seeds"]) == [3] * 5
    # median của {o, o + 1, o + 4} = o + 1
    assert list(summary["bleu"]) == pytest.approx([1.0, 2.0, 3.0, 4.0, 5.0])
    assert "ae4_se4" in format_table(summary)


def test_write_sweep_tables(tmp_path):
    runs = run_sweep("branch", lambda row, seed: {"bleu": 10.0 * seed}, SweepConfig(seeds=(1, 3)))
    summary = aggregate_sweep(runs)
    path = write_sweep(runs, summary, tmp_path, "branch")
    assert path.name == "sweep_branch.parquet"
    loaded = pd.read_parquet(path)
    assert list(loaded["row"]) == ["seq", "word"]
    assert list(loaded["bleu"]) == pytest.approx([20.0, 20.0])
    assert (tmp_path / "sweep_branch_runs.parquet").exists()


def test_empty_seed_list_is_rejected():
    with pytest.raises(ConfigError):
        SweepConfig(seeds=())
