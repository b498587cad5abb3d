import numpy as np
import pytest

from src.core.gradcheck import grad_check
from src.data.batching import collate
from src.model.losses import total_loss
from src.model.lut_model import LutModel
from src.model.model_config import ModelConfig
from src.teacher.teacher_model import table_mode
from src.utils.errors import ConfigError, DimensionError
from tests.conftest import tiny_model_config


def _batch(tiny_data, n=2):
    utts, src_vocab, tgt_vocab, _ = tiny_data
    return collate(utts[:n], src_vocab, tgt_vocab)


def test_encoder_shapes(tiny_data, tiny_model, tiny_teacher):
    batch = _batch(tiny_data, n=3)
    n_ctc = tiny_model.cfg.n_ctc_labels
    b, t = batch.features.shape[:2]
    per_token, _, _ = tiny_teacher.embed_batch(batch.z)

    seq = tiny_model.encode(batch.features, batch.frame_lengths, branch="seq")
    assert seq.h_ae.shape == (b, t, 8) and seq.h_se.shape == (b, t, 8)
    assert seq.ctc_log_probs.shape == (b, t, n_ctc)
    assert seq.v0.shape == (b, 8) and seq.v1 is None

    word = tiny_model.encode(batch.features, batch.frame_lengths, teacher_per_token=per_token, branch="word")
    assert word.v1.shape == (b, per_token.shape[1], 8)


def test_inference_needs_no_transcription(tiny_data, tiny_model):
    batch = _batch(tiny_data)
    out = tiny_model.encode(batch.features, batch.frame_lengths)
    assert out.v0 is None and out.v1 is None
    with pytest.raises(ConfigError):
        tiny_model.encode(batch.features, batch.frame_lengths, branch="word")


def test_log_probs_are_normalized(tiny_data, tiny_model):
    batch = _batch(tiny_data)
    out = tiny_model.encode(batch.features, batch.frame_lengths)
    np.testing.assert_allclose(np.exp(out.ctc_log_probs.data).sum(axis=-1), 1.0, atol=1e-9)
    log_probs = tiny_model.decode_forward(batch.y_in, out.h_se, batch.frame_lengths)
    np.testing.assert_allclose(np.exp(log_probs.data).sum(axis=-1), 1.0, atol=1e-9)


def test_decoder_is_causal(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    h_se = tiny_model.semantic_encode(tiny_model.acoustic_encode(utts[0].features)[0])
    a, b = tgt_vocab.content_ids[:2]
    first = tiny_model.decode_forward(np.array([tgt_vocab.sos_id, a, a]), h_se).data
    second = tiny_model.decode_forward(np.array([tgt_vocab.sos_id, a, b]), h_se).data
    np.testing.assert_allclose(first[:2], second[:2], atol=1e-12)
    assert not np.allclose(first[2], second[2])


def test_padding_does_not_leak(tiny_data, tiny_model):
    utts, src_vocab, tgt_vocab, _ = tiny_data
    ordered = sorted(utts, key=lambda u: u.n_frames)
    short, long_ = ordered[0], ordered[-1]
    assert short.n_frames < long_.n_frames
    batch = collate([short, long_], src_vocab, tgt_vocab)
    together = tiny_model.encode(batch.features, batch.frame_lengths, branch="seq")
    alone = tiny_model.encode(short.features[None], branch="seq")
    n = short.n_frames
    np.testing.assert_allclose(together.h_se.data[0, :n], alone.h_se.data[0], atol=1e-9)
    np.testing.assert_allclose(together.v0.data[0], alone.v0.data[0], atol=1e-9)


def test_single_utterance_input_drops_batch_axis(tiny_data, tiny_model):
    utts = tiny_data[0]
    h_ae, ctc = tiny_model.acoustic_encode(utts[0].features)
    assert h_ae.shape == (utts[0].n_frames, 8)
    assert ctc.shape[0] == utts[0].n_frames
    with pytest.raises(DimensionError):
        tiny_model.acoustic_encode(np.zeros((3, 5)))


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(branch="sentence")
    with pytest.raises(ConfigError):
        LutModel(ModelConfig())


def _pointwise_conv_model(tiny_data) -> LutModel:
    _, src_vocab, tgt_vocab, _ = tiny_data
    return LutModel(tiny_model_config(src_vocab, tgt_vocab, conv_kernel=(1, 1))).eval()


def test_seq_branch_keeps_constant_sequence(tiny_data):
    model = _pointwise_conv_model(tiny_data)
    row = np.random.default_rng(5).normal(size=(1, 8))
    single = model.seq_branch(row).data
    for n_frames in (2, 5, 9):
        np.testing.assert_allclose(model.seq_branch(np.repeat(row, n_frames, axis=0)).data, single, atol=1e-12)


def test_seq_branch_ignores_frame_order(tiny_data):
    model = _pointwise_conv_model(tiny_data)
    rng = np.random.default_rng(6)
    h_se = rng.normal(size=(7, 8))
    expected = model.seq_branch(h_se).data
    for _ in range(5):
        shuffled = h_se[rng.permutation(7)]
        np.testing.assert_allclose(model.seq_branch(shuffled).data, expected, atol=1e-12)


def test_attention_recording(tiny_data, tiny_model):
    batch = _batch(tiny_data)
    tiny_model.record_attention(True)
    out = tiny_model.encode(batch.features, batch.frame_lengths)
    tiny_model.decode_forward(batch.y_in, out.h_se, batch.frame_lengths)
    maps = tiny_model.attention_maps()
    assert "acoustic.0.self" in maps and "decoder.0.cross" in maps
    assert "word_branch" not in maps
    tiny_model.record_attention(False)
    assert tiny_model.attention_maps() == {}


@pytest.mark.parametrize("branch", ["seq", "word"])
def test_full_model_gradients(tiny_data, branch):
    utts, src_vocab, tgt_vocab, _ = tiny_data
    model = LutModel(tiny_model_config(src_vocab, tgt_vocab, d_model=16, d_ff=32, branch=branch))
    teacher = table_mode(src_vocab, d_model=16, seed=0)
    batch = collate(utts[:2], src_vocab, tgt_vocab)
    wanted = ("input_proj.", "acoustic_layers.0.self_attn.", "seq_conv.", "word_attn.", "decoder_layers.0.cross_attn.", "out_proj.")
    params = [p for name, p in model.named_parameters() if name.startswith(wanted)]
    report = grad_check(lambda: total_loss(model, batch, teacher)[0], params, max_coords=3)
    assert report.max_rel_error < 1e-4
