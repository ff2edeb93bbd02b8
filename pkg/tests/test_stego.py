import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from stegnet.stego import (
    MAX_CHANGE_RATE,
    MAX_PAYLOAD,
    EmbedParams,
    change_rate_for_payload,
    lsbm_embed,
    ternary_entropy,
)

# frozen from the brentq oracle below (H2(beta) + beta = 0.4)
BETA_04 = 0.06254278797587176


def oracle(payload):
    def h(b):
        return -b * math.log2(b) - (1 - b) * math.log2(1 - b) + b - payload
    return brentq(h, 1e-15, MAX_CHANGE_RATE, xtol=1e-15)


def test_endpoints():
    assert change_rate_for_payload(0) == 0
    assert change_rate_for_payload(MAX_PAYLOAD) == pytest.approx(2 / 3, abs=1e-12)
    assert ternary_entropy(2 / 3) == pytest.approx(math.log2(3), abs=1e-12)


def test_beta_for_04():
    beta = change_rate_for_payload(0.4)
    assert 0.060 < beta < 0.066
    assert abs(beta - oracle(0.4)) <= 1e-9
    assert abs(beta - BETA_04) <= 1e-9


@settings(max_examples=50)
@given(st.floats(1e-3, MAX_PAYLOAD - 1e-3))
def test_inverts_entropy(r):
    assert abs(change_rate_for_payload(r) - oracle(r)) <= 1e-9


@pytest.mark.parametrize("r", [-0.1, 1.6])
def test_payload_range(r):
    with pytest.raises(ValueError):
        change_rate_for_payload(r)


def test_zero_payload_is_identity():
    cover = np.random.default_rng(0).integers(0, 256, (64, 64), dtype=np.uint8)
    np.testing.assert_array_equal(lsbm_embed(cover, EmbedParams(0.0, 5)), cover)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, MAX_PAYLOAD), st.integers(0, 2**32 - 1))
def test_changes_are_plus_minus_one(r, seed):
    cover = np.random.default_rng(seed).integers(0, 256, (32, 32), dtype=np.uint8)
    cover[0, :4] = [0, 0, 255, 255]
    stego = lsbm_embed(cover, EmbedParams(r, seed))
    d = stego.astype(int) - cover.astype(int)
    assert set(np.unique(d)) <= {-1, 0, 1}
    assert stego.dtype == np.uint8


@pytest.mark.parametrize("r", [0.2, 0.4, 1.0])
def test_change_fraction_within_3_sigma(r):
    cover = np.random.default_rng(1).integers(0, 256, (256, 256), dtype=np.uint8)
    params = EmbedParams(r, 42)
    changed = (lsbm_embed(cover, params) != cover).mean()
    beta, n = params.change_rate, cover.size
    assert abs(changed - beta) <= 3 * math.sqrt(beta * (1 - beta) / n)


def test_saturated_pixels_move_inwards():
    params = EmbedParams.from_change_rate(0.6, 3)
    low = lsbm_embed(np.zeros((64, 64), dtype=np.uint8), params)
    high = lsbm_embed(np.full((64, 64), 255, dtype=np.uint8), params)
    assert set(np.unique(low)) == {0, 1}
    assert set(np.unique(high)) == {254, 255}


def test_seeded():
    cover = np.random.default_rng(0).integers(0, 256, (32, 32), dtype=np.uint8)
    a = lsbm_embed(cover, EmbedParams(0.4, 9))
    np.testing.assert_array_equal(a, lsbm_embed(cover, EmbedParams(0.4, 9)))
    assert not np.array_equal(a, lsbm_embed(cover, EmbedParams(0.4, 10)))


def test_from_change_rate():
    assert EmbedParams.from_change_rate(0.1).change_rate == pytest.approx(0.1, abs=1e-10)
