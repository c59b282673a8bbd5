import numpy as np
import pytest

from bmseg.grid import GridError, binary_mask_filtration, make_filtration
from bmseg.oracle import (
    barcode_oracle,
    homology_ranks,
    image_barcode_oracle,
    persistent_betti_oracle,
)
from bmseg.persistence import (
    betti_numbers,
    compute_barcode,
    image_barcode,
)

METHODS = ("fast", "reduction")


@pytest.mark.parametrize("method", METHODS)
def test_all_zero_filtration(method):
    bc = compute_barcode(make_filtration(np.zeros((4, 5))), method=method)
    assert bc.value_multiset(0) == [(0.0, 1.0)]
    assert bc.value_multiset(1) == []


@pytest.mark.parametrize("method", METHODS)
def test_three_pixel_fixture(method):
    bc = compute_barcode(
        make_filtration(np.array([[0.2, 0.8, 0.4]])), method=method
    )
    assert bc.value_multiset(0) == [(0.2, 1.0), (0.4, 0.8)]


@pytest.mark.parametrize("method", METHODS)
def test_ring_fixture(method):
    ring = np.ones((3, 3))
    ring[1, 1] = 0
    bc = compute_barcode(binary_mask_filtration(ring), method=method)
    assert bc.value_multiset(0) == [(0.0, 1.0)]
    assert bc.value_multiset(1) == [(0.0, 1.0)]


def test_single_essential_bar_with_death_one():
    rng = np.random.default_rng(0)
    for _ in range(10):
        vals = rng.uniform(0, 0.9, (4, 4))
        bc = compute_barcode(make_filtration(vals))
        essentials = [b for b in bc.in_dim(0) if b.death_cell is None]
        assert len(essentials) == 1
        assert essentials[0].death == 1.0
        assert not [b for b in bc.in_dim(1) if b.death_cell is None]


def test_all_ones_filtration_has_no_bars():
    # the essential class is born at 1 and dies at the pinned death 1,
    # so it is discarded as a zero-length bar
    bc = compute_barcode(make_filtration(np.ones((3, 3))))
    assert bc.bars == []


@pytest.mark.parametrize("method", METHODS)
def test_oracle_equivalence_small_grids(method):
    rng = np.random.default_rng(1)
    for trial in range(30):
        h, w = rng.integers(1, 7, size=2)
        if trial % 2 == 0:
            vals = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(h, w))
        else:
            vals = rng.uniform(0, 1, (h, w))
        filt = make_filtration(vals)
        want = barcode_oracle(filt)
        got = compute_barcode(filt, method=method)
        for dim in (0, 1):
            assert got.value_multiset(dim) == want.value_multiset(dim)


def test_methods_agree_including_critical_cells():
    rng = np.random.default_rng(2)
    for trial in range(40):
        h, w = rng.integers(2, 9, size=2)
        if trial % 2 == 0:
            vals = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(h, w))
        else:
            vals = rng.uniform(0, 1, (h, w))
        filt = make_filtration(vals)
        fast = compute_barcode(filt, method="fast")
        red = compute_barcode(filt, method="reduction")
        key = lambda bc: [
            (b.dim, b.birth, b.death, b.birth_cell, b.death_cell)
            for b in bc.bars
        ]
        assert key(fast) == key(red)


def test_rank_function_consistency():
    rng = np.random.default_rng(3)
    for _ in range(10):
        vals = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(5, 5))
        filt = make_filtration(vals)
        bc = compute_barcode(filt)
        for dim in (0, 1):
            for b_t in (0.0, 0.25, 0.5):
                for d_t in (0.5, 0.75):
                    if d_t < b_t:
                        continue
                    want = persistent_betti_oracle(filt, filt, dim, b_t, d_t)
                    got = sum(
                        1
                        for b in bc.in_dim(dim)
                        if b.birth <= b_t and b.death > d_t
                    )
                    assert got == want


def test_reparametrization_equivariance():
    # strictly increasing map fixing 0 and 1: g(x) = x^2
    rng = np.random.default_rng(4)
    vals = rng.uniform(0, 1, (5, 5))
    bc = compute_barcode(make_filtration(vals))
    bc_g = compute_barcode(make_filtration(vals**2))
    for dim in (0, 1):
        want = sorted(
            (b.birth**2, b.death**2 if b.death_cell is not None else 1.0)
            for b in bc.in_dim(dim)
        )
        assert bc_g.value_multiset(dim) == pytest.approx(want)


def test_critical_cell_faithfulness():
    rng = np.random.default_rng(5)
    for _ in range(10):
        vals = rng.uniform(0, 1, (6, 6))
        filt = make_filtration(vals)
        for bar in compute_barcode(filt).bars:
            assert filt.cell_value(bar.birth_cell) == bar.birth
            flat = filt.vertex_values.ravel()
            assert flat[bar.birth_pixel] == bar.birth
            if bar.death_cell is None:
                assert bar.death == 1.0
            else:
                assert filt.cell_value(bar.death_cell) == bar.death
                assert flat[bar.death_pixel] == bar.death


@pytest.mark.parametrize("method", METHODS)
def test_image_identity_inclusion(method):
    rng = np.random.default_rng(6)
    vals = rng.uniform(0, 1, (5, 5))
    filt = make_filtration(vals)
    a = image_barcode(filt, filt, method=method)
    b = compute_barcode(filt, method=method)
    for dim in (0, 1):
        assert a.value_multiset(dim) == b.value_multiset(dim)


def test_image_all_zero_target():
    rng = np.random.default_rng(7)
    comp = make_filtration(rng.uniform(0.2, 1, (4, 4)))
    targ = make_filtration(np.zeros((4, 4)))
    bc = image_barcode(comp, targ)
    assert bc.value_multiset(0) == [(float(comp.vertex_values.min()), 1.0)]
    assert bc.value_multiset(1) == []
    want = image_barcode_oracle(comp, targ)
    assert bc.value_multiset(0) == want.value_multiset(0)


@pytest.mark.parametrize("method", METHODS)
def test_image_oracle_equivalence_random_pairs(method):
    rng = np.random.default_rng(8)
    for trial in range(20):
        h, w = rng.integers(2, 6, size=2)
        a = rng.uniform(0, 1, (h, w))
        b = rng.uniform(0, 1, (h, w))
        targ = make_filtration(a)
        comp = make_filtration(np.maximum(a, b))
        got = image_barcode(comp, targ, method=method)
        want = image_barcode_oracle(comp, targ)
        for dim in (0, 1):
            assert got.value_multiset(dim) == want.value_multiset(dim)


def test_image_dominance_precondition():
    a = make_filtration(np.zeros((3, 3)))
    b = make_filtration(np.full((3, 3), 0.5))
    with pytest.raises(GridError):
        image_barcode(a, b)


def test_image_shape_mismatch():
    a = make_filtration(np.ones((3, 3)))
    b = make_filtration(np.zeros((3, 4)))
    with pytest.raises(GridError):
        image_barcode(a, b)


def test_betti_numbers_examples():
    assert betti_numbers(np.ones((3, 3), dtype=int)) == (1, 0)
    two = np.zeros((3, 3), dtype=int)
    two[0, 0] = two[2, 2] = 1
    assert betti_numbers(two) == (2, 0)
    ring = np.ones((3, 3), dtype=int)
    ring[1, 1] = 0
    assert betti_numbers(ring) == (1, 1)
    assert betti_numbers(ring) == homology_ranks(ring)


def test_betti_numbers_rejects_non_binary():
    with pytest.raises(GridError):
        betti_numbers(np.array([[0.5, 1.0]]))


def test_betti_numbers_matches_oracle_on_random_masks():
    rng = np.random.default_rng(9)
    for _ in range(30):
        h, w = rng.integers(1, 9, size=2)
        mask = (rng.uniform(0, 1, (h, w)) < 0.5).astype(int)
        assert betti_numbers(mask) == homology_ranks(mask)
