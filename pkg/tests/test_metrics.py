import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsight.grid import GridMap, GridSpec
from gridsight.metrics import (
    EmptyConfusionError,
    SWEEP_FIELDS,
    confusion,
    evaluate_set,
    mean_accuracy,
    mean_iou,
    per_class,
    read_sweep_csv,
    write_sweep_csv,
)

SPEC = GridSpec(4, 5)


def hand_case():
    truth = np.array([1] * 10 + [0] * 10).reshape(4, 5)
    pred = truth.copy()
    pred.flat[[0, 1]] = 0   # two road cells predicted non-free
    pred.flat[10] = 1       # one non-free cell predicted road
    return GridMap(SPEC, pred), GridMap(SPEC, truth)


def brute_force(pred, truth, mask):
    accs, ious = [], []
    for c in range(4):
        t = (truth == c) & mask
        p = (pred == c) & mask
        if t.sum() == 0:
            continue
        accs.append((t & p).sum() / t.sum())
        ious.append((t & p).sum() / (t | p).sum())
    return np.mean(accs), np.mean(ious)


def test_hand_case_counts():
    cm = confusion(*hand_case())
    assert cm[1, 1] == 8 and cm[1, 0] == 2 and cm[0, 0] == 9 and cm[0, 1] == 1
    assert cm.sum() == 20


def test_hand_case_means():
    cm = confusion(*hand_case())
    assert mean_accuracy(cm) == pytest.approx(0.85, abs=1e-5)
    assert mean_iou(cm) == pytest.approx(0.73864, abs=1e-5)


def test_perfect_and_inverted():
    t = GridMap(SPEC, np.array([1] * 10 + [0] * 10).reshape(4, 5))
    cm = confusion(t, t)
    assert mean_accuracy(cm) == mean_iou(cm) == 1.0
    assert np.trace(cm) == 20
    inv = GridMap(SPEC, 1 - t.classes)
    cm = confusion(inv, t)
    assert mean_accuracy(cm) == mean_iou(cm) == 0.0


def test_all_masked():
    t = GridMap(SPEC, np.ones((4, 5)), np.zeros((4, 5), bool))
    cm = confusion(t, t)
    assert not cm.any()
    with pytest.raises(EmptyConfusionError):
        mean_iou(cm)
    with pytest.raises(EmptyConfusionError):
        mean_accuracy(cm)


def test_spec_mismatch():
    with pytest.raises(ValueError):
        confusion(GridMap(SPEC, np.zeros((4, 5))), GridMap(GridSpec(5, 4), np.zeros((5, 4))))


def test_mask_is_intersection():
    m1 = np.ones((4, 5), bool)
    m1[0] = False
    m2 = np.ones((4, 5), bool)
    m2[:, 0] = False
    a = GridMap(SPEC, np.zeros((4, 5)), m1)
    b = GridMap(SPEC, np.zeros((4, 5)), m2)
    assert confusion(a, b).sum() == 3 * 4


def test_set_mean_of_samples():
    spec = GridSpec(1, 5)
    truth = GridMap(spec, [[1, 1, 1, 1, 1]])
    # per-sample IoU: road 3/5=0.6 ... and 4/5=0.8
    p1 = GridMap(spec, [[1, 1, 1, 0, 0]])
    p2 = GridMap(spec, [[1, 1, 1, 1, 0]])
    assert evaluate_set([(p1, truth), (p2, truth)]).mean_iou == pytest.approx(0.7)
    assert evaluate_set([(truth, truth)]).mean_iou == 1.0


def test_set_skips_empty_samples():
    t = GridMap(SPEC, np.ones((4, 5)))
    empty = GridMap(SPEC, np.ones((4, 5)), np.zeros((4, 5), bool))
    s = evaluate_set([(t, t), (empty, empty)])
    assert s.n_scored == 1 and s.skipped == [1] and s.mean_iou == 1.0
    with pytest.raises(ValueError):
        evaluate_set([])


def test_random_pairs_match_brute_force():
    rng = np.random.default_rng(0)
    spec = GridSpec(16, 16)
    pairs, ref = [], []
    for _ in range(20):
        t = rng.integers(0, 4, (16, 16))
        p = np.where(rng.random((16, 16)) < 0.7, t, rng.integers(0, 4, (16, 16)))
        m = rng.random((16, 16)) < 0.8
        pairs.append((GridMap(spec, p, m), GridMap(spec, t, m)))
        ref.append(brute_force(p, t, m))
    s = evaluate_set(pairs)
    assert s.mean_accuracy == pytest.approx(np.mean([r[0] for r in ref]), abs=1e-12)
    assert s.mean_iou == pytest.approx(np.mean([r[1] for r in ref]), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_properties(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec(8, 8)
    t = rng.integers(0, 4, (8, 8))
    p = rng.integers(0, 4, (8, 8))
    mask = rng.random((8, 8)) < 0.9
    pred, truth = GridMap(spec, p, mask), GridMap(spec, t, mask)
    cm = confusion(pred, truth)
    # additivity over disjoint masks
    split = rng.random((8, 8)) < 0.5
    np.testing.assert_array_equal(cm, confusion(pred, truth, mask & split) + confusion(pred, truth, mask & ~split))
    # permutation invariance over cells
    perm = rng.permutation(64)
    pm = GridMap(spec, p.reshape(-1)[perm].reshape(8, 8), mask.reshape(-1)[perm].reshape(8, 8))
    tm = GridMap(spec, t.reshape(-1)[perm].reshape(8, 8), mask.reshape(-1)[perm].reshape(8, 8))
    np.testing.assert_array_equal(confusion(pm, tm), cm)
    if cm.sum():
        recall, iou, present = per_class(cm)
        assert (iou[present] <= recall[present] + 1e-12).all()
        for v in (mean_accuracy(cm), mean_iou(cm)):
            assert 0 <= v <= 1


def test_sweep_csv_round_trip(tmp_path):
    rows = [
        {"method": "flatplane", "perturbation": "none", "mean_accuracy": 0.9, "mean_iou": 0.8,
         "acc_downgrade": 0.0, "iou_downgrade": 0.0},
        {"method": "flatplane", "perturbation": "pitch+-1.5", "mean_accuracy": 0.8, "mean_iou": 0.1 + 0.2,
         "acc_downgrade": 0.1, "iou_downgrade": 0.5},
    ]
    write_sweep_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(SWEEP_FIELDS)
    assert read_sweep_csv(tmp_path / "s.csv") == rows
