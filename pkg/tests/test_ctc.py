import itertools
import math

import numpy as np
import pytest

from src.core.gradcheck import grad_check
from src.core.tensor import Parameter, log_softmax
from src.ctc.brute_force import ctc_brute_force, ctc_path_distribution
from src.ctc.ctc_loss import collapse, ctc_lattice, ctc_loss, ctc_loss_batch, required_frames
from src.ctc.greedy_decode import ctc_greedy_decode, ctc_greedy_decode_batch
from src.utils.errors import InfeasibleAlignmentError, SearchSpaceError

BLK, A, B = 0, 1, 2


def _random_log_probs(n_frames, n_classes, seed):
    logits = np.random.default_rng(seed).normal(size=(n_frames, n_classes))
    return logits - np.log(np.exp(logits).sum(axis=-1, keepdims=True))


def test_collapse_examples():
    assert collapse([A, A, BLK, A, B, BLK]) == [A, A, B]
    assert collapse([A, BLK, A, B, B, BLK]) == [A, A, B]
    assert collapse([BLK, BLK, BLK]) == []


def test_collapse_idempotent():
    rng = np.random.default_rng(0)
    for _ in range(50):
        seq = rng.integers(0, 3, size=8).tolist()
        once = collapse(seq)
        assert collapse(once) == once


def test_required_frames_counts_repeats():
    assert required_frames([A, B]) == 2
    assert required_frames([A, A]) == 3


def test_single_frame_loss():
    lp = _random_log_probs(1, 3, seed=1)
    assert ctc_loss(lp, [A]).item() == pytest.approx(-lp[0, A], abs=1e-12)


def test_uniform_two_frames_is_ln3():
    lp = np.full((2, 3), math.log(1 / 3))
    assert ctc_loss(lp, [A]).item() == pytest.approx(math.log(3), abs=1e-12)


def test_infeasible_alignment():
    with pytest.raises(InfeasibleAlignmentError):
        ctc_loss(_random_log_probs(1, 3, seed=2), [A, B])


def test_matches_brute_force_exhaustive():
    for n_labels in (1, 2, 3):
        n_classes = n_labels + 1
        for n_frames in range(1, 9):
            if n_classes ** n_frames > 70000:
                continue
            lp = _random_log_probs(n_frames, n_classes, seed=10 * n_labels + n_frames)
            dist = ctc_path_distribution(lp)
            for t_z in range(0, 5):
                for z in itertools.product(range(1, n_classes), repeat=t_z):
                    expected = -dist[z] if z in dist else math.inf
                    if math.isinf(expected):
                        with pytest.raises(InfeasibleAlignmentError):
                            ctc_loss(lp, z)
                        continue
                    assert ctc_loss(lp, z).item() == pytest.approx(expected, abs=1e-9)


def test_total_probability_is_one():
    for n_frames in range(1, 6):
        lp = _random_log_probs(n_frames, 3, seed=n_frames)
        dist = ctc_path_distribution(lp)
        assert math.fsum(math.exp(v) for v in dist.values()) == pytest.approx(1.0, abs=1e-9)


def test_loss_is_relabeling_equivariant():
    rng = np.random.default_rng(11)
    for trial in range(10):
        lp = _random_log_probs(7, 5, seed=100 + trial)
        # đổi tên nhãn k -> relabel[k], blank giữ nguyên
        relabel = np.concatenate([[BLK], 1 + rng.permutation(4)])
        moved = np.empty_like(lp)
        moved[:, relabel] = lp
        z = rng.integers(1, 5, size=int(rng.integers(0, 4))).tolist()
        expected = ctc_loss(lp, z).item()
        assert ctc_loss(moved, [int(relabel[k]) for k in z]).item() == pytest.approx(expected, abs=1e-9)


def test_empty_target_matches_definition():
    lp = _random_log_probs(4, 3, seed=3)
    assert ctc_loss(lp, []).item() == pytest.approx(-lp[:, BLK].sum(), abs=1e-12)
    assert ctc_loss(lp, []).item() == pytest.approx(ctc_brute_force(lp, []), abs=1e-9)


def test_brute_force_guard():
    with pytest.raises(SearchSpaceError):
        ctc_brute_force(np.zeros((20, 4)), [A], max_paths=1000)


def test_lattice_final_cells_give_likelihood():
    lp = _random_log_probs(5, 3, seed=4)
    lattice = ctc_lattice(lp, [A, B])
    assert lattice.log_likelihood == pytest.approx(-ctc_loss(lp, [A, B]).item(), abs=1e-12)


def test_batch_loss_matches_single_with_padding():
    lp_a = _random_log_probs(5, 3, seed=5)
    lp_b = _random_log_probs(3, 3, seed=6)
    padded = np.zeros((2, 5, 3))
    padded[0], padded[1, :3] = lp_a, lp_b
    losses = ctc_loss_batch(padded, [5, 3], [[A, B], [B]], reduction="none").data
    assert losses[0] == pytest.approx(ctc_loss(lp_a, [A, B]).item(), abs=1e-12)
    assert losses[1] == pytest.approx(ctc_loss(lp_b, [B]).item(), abs=1e-12)
    frame_mean = ctc_loss_batch(padded, [5, 3], [[A, B], [B]]).item()
    assert frame_mean == pytest.approx((losses[0] / 5 + losses[1] / 3) / 2, abs=1e-12)


def test_ctc_gradient_matches_finite_differences():
    logits = Parameter(np.random.default_rng(7).normal(size=(4, 3)), name="logits")
    report = grad_check(lambda: ctc_loss(log_softmax(logits, axis=-1), [A, B]), [logits])
    assert report.max_rel_error < 1e-4


def test_greedy_decode():
    one_hot = np.log(np.eye(3)[[A, A, BLK, B]] + 1e-12)
    assert ctc_greedy_decode(one_hot) == [A, B]
    assert ctc_greedy_decode(np.log(np.eye(3)[[BLK, BLK]] + 1e-12)) == []
    batch = np.stack([one_hot, np.log(np.eye(3)[[B, BLK, A, A]] + 1e-12)])
    assert ctc_greedy_decode_batch(batch, [4, 2]) == [[A, B], [B]]
