import numpy as np
import pytest

from src.data.vocab import Vocab
from src.teacher.teacher_model import TeacherConfig, load_teacher, save_teacher, table_mode
from src.teacher.train_teacher import draw_mlm_batch, mlm_step, train_teacher
from src.training.optimizer import Adam
from src.utils.errors import ConfigError, EmptyInputError, FrozenModelError

VOCAB = Vocab.build([f"s{i}" for i in range(6)], side="source")
SEQUENCES = [[5, 6, 7], [8, 9], [10, 5, 6, 7], [6, 8], [9, 10, 5]] * 4


def _tiny_trained(steps=3):
    cfg = TeacherConfig(
        mode="trained", n_layers=1, n_heads=2, d_ff=16, dropout=0.0, steps=steps,
        batch_size=4, warmup_steps=2, eval_interval=0, seed=0,
    )
    return train_teacher(SEQUENCES, VOCAB, d_model=8, cfg=cfg)


def test_table_lookup_is_exact():
    teacher = table_mode(VOCAB, d_model=4, seed=1)
    emb = teacher.embed([5, 7, 5])
    table = teacher.table.data
    np.testing.assert_array_equal(emb.per_token, table[[5, 7, 5]])
    np.testing.assert_allclose(emb.h_c, table[[5, 7, 5]].mean(axis=0), atol=1e-12)


def test_single_token_class_vector_is_its_row():
    teacher = table_mode(VOCAB, d_model=4, seed=2)
    np.testing.assert_allclose(teacher.embed([6]).h_c, teacher.table.data[6], atol=1e-12)


def test_table_mode_depends_on_seed():
    a, b = table_mode(VOCAB, 4, seed=0), table_mode(VOCAB, 4, seed=0)
    np.testing.assert_array_equal(a.table.data, b.table.data)
    assert not np.allclose(a.table.data, table_mode(VOCAB, 4, seed=1).table.data)


def test_embed_batch_pads_per_token():
    teacher = table_mode(VOCAB, d_model=4, seed=0)
    per_token, lengths, h_c = teacher.embed_batch([[5, 6], [7]])
    assert per_token.shape == (2, 2, 4) and h_c.shape == (2, 4)
    np.testing.assert_array_equal(lengths, [2, 1])
    np.testing.assert_array_equal(per_token[1, 1], np.zeros(4))


def test_out_of_range_ids_map_to_unk():
    teacher = table_mode(VOCAB, d_model=4, seed=0)
    np.testing.assert_array_equal(teacher.embed([999]).per_token[0], teacher.table.data[VOCAB.unk_id])


def test_empty_transcription_is_rejected():
    with pytest.raises(EmptyInputError):
        table_mode(VOCAB, d_model=4).embed([])


def test_trained_teacher_shapes_and_purity():
    teacher, report = _tiny_trained()
    assert teacher.frozen and report.steps == 3
    for z in ([5], [5, 6, 7], [10, 9, 8, 7, 6]):
        emb = teacher.embed(z)
        assert emb.per_token.shape == (len(z), 8)
        assert emb.h_c.shape == (8,)
    first, second = teacher.embed([5, 6]), teacher.embed([5, 6])
    np.testing.assert_array_equal(first.per_token, second.per_token)
    np.testing.assert_array_equal(first.h_c, second.h_c)


def test_trained_teacher_is_contextual():
    teacher, _ = _tiny_trained()
    table = table_mode(VOCAB, d_model=8, seed=0)
    rng = np.random.default_rng(8)
    content = VOCAB.content_ids
    for _ in range(20):
        first = int(rng.choice(content))
        a = [first] + rng.choice(content, size=3).tolist()
        b = [first] + rng.choice(content, size=3).tolist()
        if a == b:
            continue
        emb_a, emb_b = teacher.embed(a), teacher.embed(b)
        assert not np.allclose(emb_a.h_c, emb_b.h_c)
        # cùng token đầu nhưng ngữ cảnh khác -> vector token đầu khác (table mode thì không)
        assert not np.allclose(emb_a.per_token[0], emb_b.per_token[0])
        np.testing.assert_array_equal(table.embed(a).per_token[0], table.embed(b).per_token[0])


def test_frozen_teacher_ignores_updates():
    teacher, _ = _tiny_trained(steps=2)
    before = teacher.state_hash()
    optimizer = Adam(teacher.named_parameters())
    rng = np.random.default_rng(0)
    for _ in range(100):
        batch = draw_mlm_batch(SEQUENCES[:4], VOCAB.pad_id, 0.5, rng)
        assert mlm_step(teacher, batch, optimizer, lr=1e-2) is None
    assert teacher.state_hash() == before
    with pytest.raises(FrozenModelError):
        teacher.assert_trainable()


def test_mlm_batch_masks_at_least_one_position():
    batch = draw_mlm_batch(SEQUENCES, VOCAB.pad_id, 0.01, np.random.default_rng(3))
    assert np.all(batch.masked.sum(axis=1) >= 1)
    valid = np.arange(batch.ids.shape[1])[None, :] < batch.lengths[:, None]
    assert not np.any(batch.masked & ~valid)


def test_save_load_round_trip(tmp_path):
    teacher, _ = _tiny_trained(steps=2)
    path = save_teacher(tmp_path / "teacher.lut", teacher)
    restored = load_teacher(path)
    assert restored.frozen and restored.state_hash() == teacher.state_hash()
    np.testing.assert_allclose(restored.embed([5, 8]).h_c, teacher.embed([5, 8]).h_c, atol=1e-12)


def test_train_teacher_rejects_empty_corpus():
    with pytest.raises(EmptyInputError):
        train_teacher([[]], VOCAB, 8, TeacherConfig(mode="table"))


def test_config_validation():
    with pytest.raises(ConfigError):
        TeacherConfig(mode="bert")
    with pytest.raises(ConfigError):
        TeacherConfig(n_layers=2, target_layer=3)
