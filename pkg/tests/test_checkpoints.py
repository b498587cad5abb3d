import numpy as np
import pytest

from src.training.checkpoints import (
    average_checkpoints,
    average_state_dicts,
    checkpoint_paths,
    load_checkpoint,
    model_hash,
    save_averaged,
    save_checkpoint,
)
from src.data.featurize import FeatureConfig
from src.model.lut_model import LutModel
from src.utils.checkpoint_utils import decode_container, encode_container
from src.utils.errors import CheckpointError, CheckpointMismatchError, ConfigError
from tests.conftest import TINY_FEATURES, tiny_model_config


def test_round_trip_is_bit_exact(tmp_path, tiny_data, tiny_model):
    _, src_vocab, tgt_vocab, normalizer = tiny_data
    path = save_checkpoint(tmp_path / "ckpt_3.lut", tiny_model, src_vocab, tgt_vocab, 3, normalizer, TINY_FEATURES)
    model, src, tgt, norm, meta = load_checkpoint(path)
    assert model.state_hash() == tiny_model.state_hash()
    assert src == src_vocab and tgt == tgt_vocab
    np.testing.assert_array_equal(norm.mean, normalizer.mean)
    np.testing.assert_array_equal(norm.var, normalizer.var)
    assert meta["step"] == 3
    assert meta["config_hash"] == model_hash(tiny_model.cfg, src_vocab, tgt_vocab, TINY_FEATURES)


def test_hash_mismatch_is_rejected(tmp_path, tiny_data, tiny_model):
    _, src_vocab, tgt_vocab, _ = tiny_data
    path = save_checkpoint(tmp_path / "a.lut", tiny_model, src_vocab, tgt_vocab, 1, features=TINY_FEATURES)
    other = model_hash(tiny_model.cfg, src_vocab, tgt_vocab, FeatureConfig(stack_right=2))
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(path, expected_hash=other)


def test_loss_weights_do_not_change_hash(tiny_data):
    _, src_vocab, tgt_vocab, _ = tiny_data
    a = tiny_model_config(src_vocab, tgt_vocab)
    b = tiny_model_config(src_vocab, tgt_vocab, alpha=0.9, beta=0.0, gamma=0.1, branch="seq")
    c = tiny_model_config(src_vocab, tgt_vocab, d_model=16)
    assert model_hash(a, src_vocab, tgt_vocab) == model_hash(b, src_vocab, tgt_vocab)
    assert model_hash(a, src_vocab, tgt_vocab) != model_hash(c, src_vocab, tgt_vocab)


def test_average_opposite_states_is_zero():
    w = {"w": np.array([[1.0, -2.0], [3.0, 0.5]])}
    avg = average_state_dicts([w, {"w": -w["w"]}])
    np.testing.assert_array_equal(avg["w"], np.zeros((2, 2)))


def test_average_single_state_is_identity():
    w = {"w": np.random.default_rng(0).normal(size=(3,))}
    np.testing.assert_array_equal(average_state_dicts([w])["w"], w["w"])


def test_average_three_states():
    states = [{"w": np.full(2, v)} for v in (1.0, 2.0, 6.0)]
    np.testing.assert_allclose(average_state_dicts(states)["w"], [3.0, 3.0])


def test_average_ignores_input_order(tiny_data):
    _, src_vocab, tgt_vocab, _ = tiny_data
    a, b, c = (LutModel(tiny_model_config(src_vocab, tgt_vocab, seed=s)).state_dict() for s in (0, 1, 2))
    forward, rotated = average_state_dicts([a, b, c]), average_state_dicts([c, a, b])
    assert set(forward) == set(rotated)
    for name in forward:
        np.testing.assert_allclose(forward[name], rotated[name], rtol=0, atol=1e-12)


def test_average_rejects_mismatched_states():
    with pytest.raises(CheckpointError):
        average_state_dicts([{"w": np.zeros(2)}, {"w": np.zeros(3)}])
    with pytest.raises(CheckpointError):
        average_state_dicts([{"w": np.zeros(2)}, {"v": np.zeros(2)}])
    with pytest.raises(ConfigError):
        average_state_dicts([])


def test_average_checkpoint_files(tmp_path, tiny_data):
    _, src_vocab, tgt_vocab, _ = tiny_data
    paths = []
    for seed in (0, 1):
        model = LutModel(tiny_model_config(src_vocab, tgt_vocab, seed=seed))
        paths.append(save_checkpoint(tmp_path / f"ckpt_{seed + 1}.lut", model, src_vocab, tgt_vocab, seed + 1))
    states = [load_checkpoint(p)[0].state_dict() for p in paths]
    arrays, meta = average_checkpoints(paths)
    name = "out_proj.weight"
    np.testing.assert_allclose(arrays[name], (states[0][name] + states[1][name]) / 2)
    assert meta["step"] == 2 and len(meta["averaged_from"]) == 2
    averaged, *_ = load_checkpoint(save_averaged(paths, tmp_path / "final.lut"))
    np.testing.assert_allclose(averaged.state_dict()[name], arrays[name])
    assert checkpoint_paths(tmp_path) == paths


def test_average_checkpoints_rejects_different_configs(tmp_path, tiny_data):
    _, src_vocab, tgt_vocab, _ = tiny_data
    a = save_checkpoint(tmp_path / "a.lut", LutModel(tiny_model_config(src_vocab, tgt_vocab)), src_vocab, tgt_vocab, 1)
    b = save_checkpoint(
        tmp_path / "b.lut", LutModel(tiny_model_config(src_vocab, tgt_vocab, d_ff=32)), src_vocab, tgt_vocab, 1
    )
    with pytest.raises(CheckpointError):
        average_checkpoints([a, b])


def test_container_rejects_bad_magic():
    blob = encode_container({"x": np.ones(2)}, {"tag": "t"})
    arrays, meta = decode_container(blob)
    assert meta == {"tag": "t"}
    np.testing.assert_array_equal(arrays["x"], np.ones(2))
    with pytest.raises(CheckpointError):
        decode_container(b"NOTMAGIC" + blob[8:])
