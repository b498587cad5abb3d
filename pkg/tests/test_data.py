import dataclasses

import numpy as np
import pytest

from src.data.batching import collate, filter_feasible, make_batches
from src.data.featurize import FeatureNormalizer, featurize, stack_frames
from src.data.generate_corpus import CorpusSpec, generate_corpus, split_corpus
from src.data.manifest import decode_raw_features, encode_raw_features, read_manifest, write_manifest
from src.data.spec_augment import AugmentConfig, draw_masks, spec_augment
from src.data.utterance import KIND_ASR, KIND_ST, Utterance
from src.data.vocab import Vocab
from src.utils.errors import ConfigError, DimensionError


def _utt(utt_id, n_frames, z=(5,), y=(4,), dim=2, **kwargs):
    return Utterance(utt_id=utt_id, features=np.zeros((n_frames, dim)), z=z, y=y, **kwargs)


# --- vocab ---

def test_vocab_reserved_ids():
    src = Vocab.build(["s0", "s1"], side="source")
    tgt = Vocab.build(["t0", "t1"], side="target")
    assert (src.blank_id, src.pad_id, src.sos_id, src.eos_id, src.unk_id) == (0, 1, 2, 3, 4)
    assert (tgt.pad_id, tgt.sos_id, tgt.eos_id, tgt.unk_id) == (0, 1, 2, 3)
    assert src.content_ids == [5, 6]
    assert src.encode(["s1", "zzz"]) == [6, 4]


def test_vocab_ctc_labels():
    src = Vocab.build(["s0", "s1"], side="source")
    np.testing.assert_array_equal(src.ctc_label_ids(), [0, 4, 5, 6])
    assert src.to_ctc([5, 6, 4]) == [2, 3, 1]
    assert src.from_ctc([2, 3, 1]) == [5, 6, 4]
    with pytest.raises(ConfigError):
        src.to_ctc([src.sos_id])
    with pytest.raises(ConfigError):
        Vocab.build(["t0"], side="target").ctc_label_ids()


def test_vocab_save_load(tmp_path):
    src = Vocab.build(["s0", "s1", "s2"], side="source")
    src.save(tmp_path / "src.vocab")
    assert Vocab.load(tmp_path / "src.vocab") == src
    with pytest.raises(FileNotFoundError):
        Vocab.load(tmp_path / "missing.vocab")


def test_utterance_kind_rules():
    with pytest.raises(ValueError):
        _utt("a", 3, kind=KIND_ASR)
    with pytest.raises(ValueError):
        _utt("b", 3, y=None, kind=KIND_ST)
    assert _utt("c", 3, y=None, kind=KIND_ASR).y is None


# --- corpus ---

def test_corpus_is_deterministic(tiny_spec):
    a, b = generate_corpus(tiny_spec), generate_corpus(tiny_spec)
    for ua, ub in zip(a.utterances, b.utterances):
        assert ua.z == ub.z and ua.y == ub.y
        np.testing.assert_array_equal(ua.features, ub.features)
    other = generate_corpus(dataclasses.replace(tiny_spec, seed=1))
    assert any(ua.z != uo.z for ua, uo in zip(a.utterances, other.utterances))


def test_noiseless_copy_map_corpus():
    spec = CorpusSpec(
        n_src_tokens=5, n_tgt_tokens=5, n_utts=30, min_len=2, max_len=4, frames_per_token=2,
        noise=0.0, speaker_offset_scale=0.0, feature_dim=3, n_speakers=1, n_intents=2,
        translation_rule="copy-map", seed=3,
    )
    corpus = generate_corpus(spec)
    first = corpus.src_vocab.content_ids[0]
    mapping = {}
    for utt in corpus.utterances:
        assert utt.n_frames == 2 * len(utt.z)
        expected = np.repeat(corpus.prototypes[np.array(utt.z) - first], 2, axis=0)
        np.testing.assert_allclose(utt.features, expected, atol=1e-12)
        assert len(utt.y) == len(utt.z)
        for s, t in zip(utt.z, utt.y):
            assert mapping.setdefault(s, t) == t
        assert utt.intent_id == (utt.z[0] - first) % spec.n_intents
    # copy-map với |tgt| >= |src| là đơn ánh
    assert len(set(mapping.values())) == len(mapping)


def test_reverse_map_reverses_order(tiny_spec):
    fwd = generate_corpus(dataclasses.replace(tiny_spec, translation_rule="copy-map"))
    rev = generate_corpus(dataclasses.replace(tiny_spec, translation_rule="reverse-map"))
    for uf, ur in zip(fwd.utterances, rev.utterances):
        assert ur.y == uf.y[::-1]


def test_asr_pairs_have_no_translation(tiny_spec):
    corpus = generate_corpus(dataclasses.replace(tiny_spec, n_asr_utts=5))
    assert len(corpus.asr_utterances) == 5
    assert all(u.y is None and u.kind == KIND_ASR for u in corpus.asr_utterances)


def test_split_corpus_partitions(tiny_corpus):
    train, dev, test = split_corpus(tiny_corpus.utterances, 0.1, 0.1, seed=0)
    assert (len(train), len(dev), len(test)) == (32, 4, 4)
    ids = [u.utt_id for u in train + dev + test]
    assert sorted(ids) == sorted(u.utt_id for u in tiny_corpus.utterances)
    with pytest.raises(ConfigError):
        split_corpus(tiny_corpus.utterances, 0.5, 0.5, seed=0)


# --- featurize ---

def test_featurize_length_law():
    raw = np.random.default_rng(0).normal(size=(9, 2))
    assert featurize(raw, stack_right=5, downsample=3).shape == (3, 12)
    assert featurize(raw[:7], stack_right=5, downsample=3).shape == (3, 12)
    assert featurize(raw[:1], stack_right=0, downsample=3).shape == (1, 2)


def test_stack_frames_clamps_right_edge():
    raw = np.arange(7, dtype=float).reshape(7, 1)
    out = stack_frames(raw, stack_right=2)
    for t in range(7):
        np.testing.assert_array_equal(out[t], [min(t, 6), min(t + 1, 6), min(t + 2, 6)])


def test_constant_input_normalizes_to_zero():
    out = featurize(np.full((5, 3), 4.0), stack_right=0, downsample=1, normalize=True)
    np.testing.assert_allclose(out, np.zeros((5, 3)), atol=1e-12)


def test_normalizer_uses_train_statistics():
    frames = [np.array([[0.0], [2.0]]), np.array([[4.0]])]
    norm = FeatureNormalizer.fit(frames)
    np.testing.assert_allclose(norm.mean, [2.0])
    restored = FeatureNormalizer.from_arrays(norm.to_arrays())
    np.testing.assert_allclose(restored(np.array([[2.0]])), [[0.0]])


# --- spec_augment ---

def test_spec_augment_null_masks_is_identity():
    x = np.random.default_rng(1).normal(size=(10, 4))
    cfg = AugmentConfig(freq_masks=0, time_masks=0)
    np.testing.assert_array_equal(spec_augment(x, cfg, seed=0), x)
    np.testing.assert_array_equal(spec_augment(x, AugmentConfig(enabled=False)), x)


def test_spec_augment_cells_are_kept_or_zeroed():
    x = np.random.default_rng(2).normal(size=(20, 6)) + 10.0
    out = spec_augment(x, AugmentConfig(freq_max_width=3, time_max_width=5), seed=4)
    kept = out == x
    zeroed = out == 0.0
    assert np.all(kept | zeroed)
    assert out is not x


@pytest.mark.parametrize("n_frames, n_features", [(20, 6), (3, 2)])
def test_mask_counts_and_widths_stay_bounded(n_frames, n_features):
    cfg = AugmentConfig(freq_max_width=3, freq_masks=2, time_max_width=5, time_masks=3)
    for seed in range(1000):
        bands, spans = draw_masks(n_frames, n_features, cfg, np.random.default_rng(seed))
        assert len(bands) <= cfg.freq_masks and len(spans) <= cfg.time_masks
        for start, width in bands:
            assert 1 <= width <= cfg.freq_max_width
            assert 0 <= start and start + width <= n_features
        for start, width in spans:
            assert 1 <= width <= cfg.time_max_width
            assert 0 <= start and start + width <= n_frames


# --- batching ---

def test_make_batches_budget_and_cover():
    utts = [_utt(f"u{i}", n) for i, n in enumerate([30, 30, 40, 60])]
    batches = make_batches(utts, frames_budget=100, seed=0)
    assert all(sum(u.n_frames for u in b) <= 100 for b in batches)
    assert sorted(u.utt_id for b in batches for u in b) == ["u0", "u1", "u2", "u3"]
    assert len(batches) == 2


def test_make_batches_budget_equal_to_longest(tiny_corpus):
    utts = tiny_corpus.utterances
    longest = max(u.n_frames for u in utts)
    batches = make_batches(utts, frames_budget=longest, seed=0)
    assert sum(len(b) for b in batches) == len(utts)
    with pytest.raises(ConfigError):
        make_batches(utts, frames_budget=longest - 1, seed=0)


def test_collate_pads_and_frames_targets():
    src = Vocab.build(["s0", "s1"], side="source")
    tgt = Vocab.build(["t0", "t1"], side="target")
    batch = collate([_utt("a", 3, z=(5, 6), y=(4, 5)), _utt("b", 2, z=(6,), y=(5,))], src, tgt)
    np.testing.assert_array_equal(batch.frame_lengths, [3, 2])
    np.testing.assert_array_equal(batch.y_in, [[1, 4, 5], [1, 5, 0]])
    np.testing.assert_array_equal(batch.y_out, [[4, 5, 2], [5, 2, 0]])
    assert batch.ctc_targets == [[2, 3], [3]]
    assert batch.kind == KIND_ST
    asr = collate([_utt("a", 3)], src, tgt, drop_translation=True)
    assert asr.kind == KIND_ASR and asr.y_out is None


def test_filter_feasible_drops_short_utterances():
    src = Vocab.build(["s0"], side="source")
    utts = [_utt("short", 2, z=(5, 5)), _utt("ok", 3, z=(5, 5))]
    assert [u.utt_id for u in filter_feasible(utts, src)] == ["ok"]


# --- manifest ---

@pytest.mark.parametrize("inline", [False, True])
def test_manifest_round_trip(tmp_path, tiny_spec, inline):
    corpus = generate_corpus(dataclasses.replace(tiny_spec, n_utts=5, n_asr_utts=2))
    utts = corpus.utterances + corpus.asr_utterances
    path = write_manifest(tmp_path / "train.jsonl", utts, corpus.src_vocab, corpus.tgt_vocab, inline=inline)
    loaded = read_manifest(path, corpus.src_vocab, corpus.tgt_vocab)
    assert len(loaded) == len(utts)
    for a, b in zip(utts, loaded):
        assert (a.utt_id, a.z, a.y, a.speaker_id, a.intent_id, a.kind) == \
               (b.utt_id, b.z, b.y, b.speaker_id, b.intent_id, b.kind)
        np.testing.assert_array_equal(a.features, b.features)


def test_empty_manifest_reads_as_empty(tmp_path):
    src = Vocab.build(["s0"], side="source")
    tgt = Vocab.build(["t0"], side="target")
    path = write_manifest(tmp_path / "empty.jsonl", [], src, tgt)
    assert read_manifest(path, src, tgt) == []


def test_raw_feature_header_mismatch():
    blob = encode_raw_features(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        decode_raw_features(blob[:-8])
