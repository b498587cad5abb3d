import math

import pytest

from src.evaluation.metrics import bleu, corpus_wer, edit_distance, pearson, sentence_bleu, wer
from src.utils.errors import EmptyInputError, UndefinedCorrelationError


def test_edit_distance():
    assert edit_distance(list("kitten"), list("sitting")) == 3
    assert edit_distance([], ["a", "b"]) == 2
    assert edit_distance(["a"], ["a"]) == 0


def test_wer_examples():
    assert wer("the cat sat".split(), "the sat".split()) == pytest.approx(1 / 3)
    assert wer(["a"], ["a", "b", "c"]) == pytest.approx(2.0)
    assert wer(["a", "b"], ["a", "b"]) == 0.0
    with pytest.raises(EmptyInputError):
        wer([], ["a"])


def test_corpus_wer_pools_counts():
    refs = [["a", "b", "c", "d"], ["e"]]
    hyps = [["a", "b", "c", "d"], ["f"]]
    assert corpus_wer(refs, hyps) == pytest.approx(1 / 5)
    with pytest.raises(ValueError):
        corpus_wer(refs, hyps[:1])


def test_bleu_identity_and_extra_token():
    ref = "a b c d".split()
    assert bleu([ref], [ref]) == pytest.approx(100.0)
    assert bleu([ref], [ref + ["e"]]) == pytest.approx(100.0 * 0.2 ** 0.25)


def test_bleu_brevity_penalty():
    ref = "a b c d e".split()
    assert bleu([ref], [ref[:4]]) == pytest.approx(100.0 * math.exp(1 - 5 / 4))


def test_bleu_pools_statistics_over_corpus():
    refs = ["a b c d".split(), "e f g h".split()]
    hyps = ["a b c d".split(), "e f z w".split()]
    assert bleu(refs, hyps) == pytest.approx(100.0 * 0.125 ** 0.25)


def test_bleu_without_four_grams_is_zero():
    assert bleu([["a", "b", "c"]], [["a", "b", "c"]]) == 0.0
    assert bleu([["a"]], [[]]) == 0.0
    with pytest.raises(EmptyInputError):
        bleu([], [])


def test_char_level_bleu():
    assert bleu([["hello", "world"]], [["hello", "world"]], char_level=True) == pytest.approx(100.0)
    assert bleu([["hello", "world"]], [["helloworld"]], char_level=True) == pytest.approx(100.0)


def test_sentence_bleu_add_one_smoothing():
    assert sentence_bleu("a b c".split(), "a b c".split()) == pytest.approx(100.0)
    assert sentence_bleu("a b c".split(), "a b d".split()) == pytest.approx(100.0 * (2 / 9) ** 0.25)
    assert sentence_bleu("a b c".split(), "x y z".split()) == 0.0


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert -1.0 <= pearson([1e-9, 2e-9, 3e-9], [5.0, 10.0, 15.0]) <= 1.0


def test_pearson_undefined_cases():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        pearson([1], [2])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_sentence_bleu_short_hypothesis_only_pays_brevity():
    # không có bigram trở lên -> các bậc đó làm mịn thành 1
    assert sentence_bleu("a b c d".split(), ["a"]) == pytest.approx(100.0 * math.exp(1.0 - 4.0))
    assert sentence_bleu("a b c d".split(), ["x"]) == 0.0
