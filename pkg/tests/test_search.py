import itertools

import numpy as np
import pytest

from src.core.tensor import as_tensor, no_grad
from src.evaluation.search import DecodeConfig, Hypothesis, beam_search, greedy_translate, translate, translate_all
from src.utils.errors import ConfigError


def _allowed(tgt_vocab):
    return [i for i in range(len(tgt_vocab)) if i not in (tgt_vocab.pad_id, tgt_vocab.sos_id)]


def _sequence_log_prob(model, x, tgt_vocab, tokens):
    with no_grad():
        out = model.encode(x[None], np.array([x.shape[0]]))
        prefix = np.array((tgt_vocab.sos_id,) + tuple(tokens[:-1]))
        log_probs = model.decode_forward(prefix, out.h_se[0]).data
    return float(sum(log_probs[i, t] for i, t in enumerate(tokens)))


def test_greedy_never_emits_reserved_tokens(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    for utt in utts[:5]:
        out = greedy_translate(tiny_model, utt.features, tgt_vocab, max_len=6)
        assert len(out) <= 6
        assert tgt_vocab.pad_id not in out and tgt_vocab.sos_id not in out
        assert tgt_vocab.eos_id not in out


@pytest.mark.parametrize("shift", [-40.0, 3.5, 100.0])
def test_greedy_ignores_constant_logit_shift(tiny_data, tiny_model, monkeypatch, shift):
    utts, _, tgt_vocab, _ = tiny_data
    expected = [greedy_translate(tiny_model, u.features, tgt_vocab, max_len=6) for u in utts[:5]]
    decode_forward = tiny_model.decode_forward

    def shifted(*args, **kwargs):
        return as_tensor(decode_forward(*args, **kwargs).data + shift)

    monkeypatch.setattr(tiny_model, "decode_forward", shifted)
    assert [greedy_translate(tiny_model, u.features, tgt_vocab, max_len=6) for u in utts[:5]] == expected


def test_beam_one_equals_greedy(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    for utt in utts[:5]:
        greedy = greedy_translate(tiny_model, utt.features, tgt_vocab, max_len=5)
        hyp = beam_search(tiny_model, utt.features, tgt_vocab, beam=1, max_len=5, length_penalty=0.0)
        assert list(hyp.content(tgt_vocab.eos_id)) == greedy
        assert translate(tiny_model, utt.features, tgt_vocab, DecodeConfig(beam=1, max_len=5)) == greedy


def test_wide_beam_matches_exhaustive_search(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    x = utts[0].features
    allowed = _allowed(tgt_vocab)
    eos = tgt_vocab.eos_id
    non_eos = [t for t in allowed if t != eos]
    max_len, penalty = 3, 0.6

    pool = []
    for n in range(max_len):
        for body in itertools.product(non_eos, repeat=n):
            pool.append(body + (eos,))
    pool.extend(itertools.product(non_eos, repeat=max_len))
    scored = []
    for tokens in pool:
        lp = _sequence_log_prob(tiny_model, x, tgt_vocab, tokens)
        scored.append((-lp / len(tokens) ** penalty, tuple(tokens), lp))
    _, best_tokens, best_lp = min(scored)

    hyp = beam_search(tiny_model, x, tgt_vocab, beam=len(allowed) ** max_len, max_len=max_len, length_penalty=penalty)
    assert hyp.tokens == best_tokens
    assert hyp.log_prob == pytest.approx(best_lp, abs=1e-9)
    assert hyp.finished == (best_tokens[-1] == eos)


def test_beam_respects_max_len(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    hyp = beam_search(tiny_model, utts[1].features, tgt_vocab, beam=4, max_len=2)
    assert 1 <= len(hyp.tokens) <= 2
    with pytest.raises(ConfigError):
        beam_search(tiny_model, utts[1].features, tgt_vocab, max_len=tiny_model.cfg.max_st_len + 1)


def test_hypothesis_score_and_content():
    hyp = Hypothesis(tokens=(5, 6, 2), log_prob=-3.0, finished=True)
    assert hyp.score(0.0) == -3.0
    assert hyp.score(1.0) == pytest.approx(-1.0)
    assert hyp.content(2) == (5, 6)
    assert Hypothesis(tokens=(5, 6), log_prob=-1.0, finished=False).content(2) == (5, 6)


def test_translate_all_keeps_order(tiny_data, tiny_model):
    utts, _, tgt_vocab, _ = tiny_data
    cfg = DecodeConfig(beam=2, max_len=4)
    batch = translate_all(tiny_model, [u.features for u in utts[:3]], tgt_vocab, cfg)
    assert batch == [translate(tiny_model, u.features, tgt_vocab, cfg) for u in utts[:3]]


def test_decode_config_validation():
    with pytest.raises(ConfigError):
        DecodeConfig(beam=0)
    with pytest.raises(ConfigError):
        DecodeConfig(max_len=0)
