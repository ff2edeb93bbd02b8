import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegnet.srm import N_FILTERS, build_filter_bank, preprocess, preprocess_layer
from stegnet.tensor import ShapeError

KV = np.array([[-1, 2, -2, 2, -1],
               [2, -6, 8, -6, 2],
               [-2, 8, -12, 8, -2],
               [2, -6, 8, -6, 2],
               [-1, 2, -2, 2, -1]], dtype=float)


@pytest.fixture(scope="module")
def bank():
    return build_filter_bank()


def test_thirty_zero_sum_kernels(bank):
    assert len(bank) == N_FILTERS == 30
    assert bank.kernels.shape == (30, 5, 5)
    assert len(set(bank.names)) == 30
    np.testing.assert_array_equal(bank.kernels.sum(axis=(1, 2)), 0)


def test_kv_kernel(bank):
    np.testing.assert_array_equal(bank["square5x5"], KV)


def test_family_sizes(bank):
    prefixes = [n.split("_")[0] for n in bank.names]
    assert {p: prefixes.count(p) for p in set(prefixes)} == {
        "1st": 8, "2nd": 4, "3rd": 8, "square3x3": 1, "square5x5": 1, "edge3x3": 4, "edge5x5": 4}


def test_kernels_are_distinct(bank):
    flat = bank.kernels.reshape(30, -1)
    assert len({tuple(r) for r in flat}) == 30


def test_bank_is_read_only(bank):
    with pytest.raises(ValueError):
        bank.kernels[0, 0, 0] = 1


def test_first_order_on_ramp(bank):
    j = np.tile(np.arange(16.0), (16, 1))
    k = list(bank.names).index("1st_E")
    r = preprocess(j[None, None])[0, k]
    np.testing.assert_array_equal(r[2:-2, 2:-2], 1.0)


def test_edge_kernels_are_quarter_turns(bank):
    for size in ("3x3", "5x5"):
        e = bank[f"edge{size}_E"]
        np.testing.assert_array_equal(bank[f"edge{size}_S"], np.rot90(e, -1))
        np.testing.assert_array_equal(bank[f"edge{size}_W"], np.rot90(e, -2))
        np.testing.assert_array_equal(bank[f"edge{size}_N"], np.rot90(e, -3))


def test_output_shape():
    assert preprocess(np.zeros((1, 1, 256, 256))).shape == (1, 30, 256, 256)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 255), st.integers(5, 40), st.integers(5, 40))
def test_constant_image_has_no_residual(c, h, w):
    # zero padding makes the 2-pixel border see an edge, so only the interior is flat
    r = preprocess(np.full((1, 1, h, w), c))
    assert r.shape == (1, 30, h, w)
    np.testing.assert_array_equal(r[..., 2:-2, 2:-2], 0)
    r32 = preprocess_layer().forward(np.full((1, 1, h, w), c, dtype=np.float32))
    assert np.abs(r32[..., 2:-2, 2:-2]).max(initial=0) <= 1e-3


def test_zero_image_has_no_residual_anywhere():
    np.testing.assert_array_equal(preprocess(np.zeros((2, 1, 9, 7))), 0)


def test_single_pixel_change_is_local():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (1, 1, 20, 20)).astype(np.float64)
    moved = img.copy()
    moved[0, 0, 9, 12] += 1
    diff = preprocess(moved) - preprocess(img)
    outside = np.ones((20, 20), dtype=bool)
    outside[7:12, 10:15] = False
    assert np.all(diff[0][:, outside] == 0)
    assert np.abs(diff).max() > 0


def test_rejects_multichannel():
    with pytest.raises(ShapeError):
        preprocess(np.zeros((1, 3, 8, 8)))


def test_text_dump(bank):
    stanzas = bank.to_text().strip().split("\n\n")
    assert len(stanzas) == 30
    name, *rows = stanzas[28].split("\n")
    assert name == bank.names[28] and len(rows) == 5
