import math

import numpy as np
import pytest
from tutil import binary_skeleton_oracle, random_binary_mask

from bmseg.grid import LabelGrid, MulticlassPrediction, one_hot
from bmseg.metrics import (
    betti_matching_error,
    betti_number_error,
    binarize,
    cldice_score,
    dice_score,
    evaluate,
    metric_skeleton_iterations,
    selection_score,
)


def test_binarize_one_hot_round_trip():
    rng = np.random.default_rng(0)
    labels = LabelGrid(rng.integers(0, 4, (5, 5)))
    assert np.array_equal(binarize(one_hot(labels, 4)).labels, labels.labels)


def test_binarize_uniform_ties_to_lowest():
    pred = MulticlassPrediction(np.full((3, 4, 4), 1.0 / 3.0))
    assert np.all(binarize(pred).labels == 0)


def test_binarize_matches_scan():
    rng = np.random.default_rng(1)
    raw = rng.dirichlet(np.ones(4), size=(5, 5)).transpose(2, 0, 1)
    pred = MulticlassPrediction(raw)
    labels = binarize(pred).labels
    for y in range(5):
        for x in range(5):
            best = 0
            for c in range(1, 4):
                if raw[c, y, x] > raw[best, y, x]:
                    best = c
            assert labels[y, x] == best


def test_bm_error_identical_masks():
    rng = np.random.default_rng(2)
    mask = random_binary_mask(rng, (6, 6))
    assert betti_matching_error(mask, mask) == 0


def test_bm_error_two_blobs_vs_one():
    pred = np.zeros((6, 6), dtype=int)
    pred[1:3, 1:3] = 1
    pred[4:6, 4:6] = 1
    gt = np.zeros((6, 6), dtype=int)
    gt[1:3, 1:3] = 1
    assert betti_matching_error(pred, gt) == 1


def test_bm_error_ring_vs_disk():
    pred = np.ones((5, 5), dtype=int)
    pred[2, 2] = 0
    gt = np.ones((5, 5), dtype=int)
    assert betti_matching_error(pred, gt) == 1


def test_betti_number_errors():
    a = np.zeros((5, 5), dtype=int)
    a[0:2, 0:2] = 1
    a[3:5, 3:5] = 1
    b = np.zeros((5, 5), dtype=int)
    b[0:2, 0:2] = 1
    assert betti_number_error(a, a, 0) == 0
    assert betti_number_error(a, b, 0) == 1
    ring = np.ones((3, 3), dtype=int)
    ring[1, 1] = 0
    disk = np.ones((3, 3), dtype=int)
    assert betti_number_error(ring, disk, 1) == 1


def test_dice_score_examples():
    mask = np.array([[1, 1], [1, 1]])
    assert dice_score(mask, mask) == 1.0
    two = np.array([[1, 1], [0, 0]])
    assert dice_score(mask, two) == pytest.approx(2 / 3)
    empty = np.zeros((2, 2), dtype=int)
    assert dice_score(empty, empty) == 1.0
    assert dice_score(mask, empty) == 0.0


def test_cldice_score_identical():
    img = np.zeros((5, 7), dtype=int)
    img[2, 1:6] = 1
    assert cldice_score(img, img) == 1.0


def test_cldice_score_tubular_fixture():
    a = np.zeros((7, 9), dtype=int)
    a[3, 1:8] = 1
    b = np.zeros((7, 9), dtype=int)
    b[3, 1:5] = 1
    b[4, 5:8] = 1
    k = metric_skeleton_iterations(a.shape)
    sp = binary_skeleton_oracle(a, k)
    sg = binary_skeleton_oracle(b, k)
    tprec = (sp * b).sum() / sp.sum()
    tsens = (sg * a).sum() / sg.sum()
    want = 2 * tprec * tsens / (tprec + tsens)
    assert cldice_score(a, b) == pytest.approx(want, rel=1e-12)


def test_cldice_score_empty_conventions():
    empty = np.zeros((4, 4), dtype=int)
    blob = np.zeros((4, 4), dtype=int)
    blob[1:3, 1:3] = 1
    assert cldice_score(empty, empty) == 1.0
    assert cldice_score(blob, empty) == 0.0
    assert cldice_score(empty, blob) == 0.0


def test_selection_score_fixtures():
    assert selection_score(0.9, 0, 3) == pytest.approx(1.9, abs=1e-12)
    assert selection_score(0.7, 5, 3) == pytest.approx(0.7, abs=1e-12)
    assert selection_score(0.8, 1, 4) == pytest.approx(1.55, abs=1e-12)
    assert selection_score(0.9, 0, 0) == pytest.approx(1.9, abs=1e-12)
    assert selection_score(0.9, 2, 0) == pytest.approx(0.9, abs=1e-12)


def test_evaluate_identity_fixed_point():
    rng = np.random.default_rng(3)
    labels = LabelGrid(rng.integers(0, 4, (8, 8)))
    pred = one_hot(labels, 4)
    rep = evaluate(pred, labels)
    assert rep.macro["dice"] == 1.0
    assert rep.macro["cldice"] == 1.0
    assert rep.macro["bm_error"] == 0.0
    assert rep.macro["b0_error"] == 0.0
    assert rep.macro["b1_error"] == 0.0
    assert rep.macro["selection_score"] == 2.0


def test_evaluate_macro_is_unweighted_mean():
    rng = np.random.default_rng(4)
    labels = LabelGrid(rng.integers(0, 3, (8, 8)))
    other = LabelGrid(rng.integers(0, 3, (8, 8)))
    rep = evaluate(one_hot(labels, 3), other)
    for key in rep.macro:
        vals = [e[key] for e in rep.per_class]
        assert rep.macro[key] == pytest.approx(float(np.mean(vals)))


def test_evaluate_class_permutation_invariance():
    rng = np.random.default_rng(5)
    labels = rng.integers(0, 3, (8, 8))
    gt = rng.integers(0, 3, (8, 8))
    rep = evaluate(one_hot(LabelGrid(labels), 3), LabelGrid(gt))
    swap = {0: 0, 1: 2, 2: 1}
    labels_s = np.vectorize(swap.get)(labels)
    gt_s = np.vectorize(swap.get)(gt)
    rep_s = evaluate(one_hot(LabelGrid(labels_s), 3), LabelGrid(gt_s))
    for key in rep.macro:
        assert rep.macro[key] == rep_s.macro[key]
    by_class = {e["class"]: e for e in rep.per_class}
    by_class_s = {e["class"]: e for e in rep_s.per_class}
    for c in (1, 2):
        for key in ("dice", "cldice", "bm_error", "b0_error", "b1_error"):
            assert by_class[c][key] == by_class_s[swap[c]][key]


def test_evaluate_matches_single_class_recomputation():
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 3, (7, 7))
    gt = rng.integers(0, 3, (7, 7))
    rep = evaluate(one_hot(LabelGrid(labels), 3), LabelGrid(gt))
    for entry in rep.per_class:
        c = entry["class"]
        p_mask = (labels == c).astype(int)
        g_mask = (gt == c).astype(int)
        assert entry["dice"] == dice_score(p_mask, g_mask)
        assert entry["cldice"] == cldice_score(p_mask, g_mask)
        assert entry["bm_error"] == betti_matching_error(p_mask, g_mask)
        assert entry["b0_error"] == betti_number_error(p_mask, g_mask, 0)
        assert entry["b1_error"] == betti_number_error(p_mask, g_mask, 1)


def test_bm_error_dominates_betti_number_errors():
    rng = np.random.default_rng(7)
    for _ in range(30):
        p = random_binary_mask(rng, (6, 6))
        g = random_binary_mask(rng, (6, 6))
        bm = betti_matching_error(p, g)
        b0 = betti_number_error(p, g, 0)
        b1 = betti_number_error(p, g, 1)
        assert b0 + b1 <= bm


def test_evaluate_degenerate_class():
    labels = LabelGrid(np.zeros((4, 4), dtype=int))
    pred = one_hot(labels, 3)
    rep = evaluate(pred, labels)
    for entry in rep.per_class:
        assert entry["degenerate"] is True
        assert entry["dice"] == 1.0
        assert entry["cldice"] == 1.0
        assert entry["selection_score"] == 2.0


def test_metric_skeleton_iterations_rule():
    assert metric_skeleton_iterations((7, 9)) == math.ceil(9 / 2)
    assert metric_skeleton_iterations((64, 64)) == 32
