from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stegnet.pgm import (
    MalformedHeaderError,
    ShortPayloadError,
    UnsupportedVariantError,
    decode_pgm,
    encode_pgm,
    load_pgm,
    save_pgm,
)

FIXTURE = Path(__file__).parent / "fixtures" / "tiny_3x2.pgm"


def test_hand_made_fixture():
    np.testing.assert_array_equal(load_pgm(FIXTURE), [[0, 17, 255], [128, 64, 1]])


def test_round_trip_file(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (37, 53), dtype=np.uint8)
    save_pgm(img, tmp_path / "a.pgm")
    out = load_pgm(tmp_path / "a.pgm")
    assert out.dtype == np.uint8
    np.testing.assert_array_equal(out, img)


@settings(max_examples=40)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_round_trip_bytes(img):
    np.testing.assert_array_equal(decode_pgm(encode_pgm(img)), img)


def test_comments_and_whitespace():
    data = b"P5 #c1\n 2\t#c2\n1\n\n255\n\x07\x08"
    np.testing.assert_array_equal(decode_pgm(data), [[7, 8]])


@pytest.mark.parametrize("magic", [b"P2", b"P6"])
def test_rejects_other_variants(magic):
    with pytest.raises(UnsupportedVariantError, match="unsupported PNM variant"):
        decode_pgm(magic + b"\n1 1\n255\n\x00\x00\x00")


def test_rejects_maxval():
    with pytest.raises(UnsupportedVariantError):
        decode_pgm(b"P5\n1 1\n65535\n\x00\x00")


def test_short_payload():
    with pytest.raises(ShortPayloadError):
        decode_pgm(b"P5\n3 2\n255\n\x00\x01\x02")


@pytest.mark.parametrize("data", [b"P5\n3", b"P5\n3 x\n255\n", b"JUNK", b"P5\n0 2\n255\n", b"P5\n1 1\n255"])
def test_malformed_header(data):
    with pytest.raises(MalformedHeaderError):
        decode_pgm(data)


def test_encode_validates():
    with pytest.raises(ValueError):
        encode_pgm(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        encode_pgm(np.array([[256.0]]))
    assert encode_pgm(np.array([[3.0]])) == b"P5\n1 1\n255\n\x03"
