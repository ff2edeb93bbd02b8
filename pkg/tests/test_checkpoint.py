import struct
import zlib

import numpy as np
import pytest

from stegnet.checkpoint import (
    BadMagicError,
    ChecksumError,
    TruncatedCheckpointError,
    VersionError,
    load_checkpoint,
    load_checkpoint_file,
    save_checkpoint,
    save_checkpoint_file,
)


@pytest.fixture
def trained(small_net):
    x = np.random.default_rng(0).integers(0, 256, (4, 1, 32, 32)).astype(np.float32)
    small_net.forward(x, mode="train")
    small_net.forward(x[::-1].copy(), mode="train")
    return small_net, x


def test_header(trained):
    data = save_checkpoint(trained[0])
    assert data[:4] == b"YNET"
    assert struct.unpack("<I", data[4:8])[0] == 1
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_save_load_save_identical(trained):
    data = save_checkpoint(trained[0])
    assert save_checkpoint(load_checkpoint(data)) == data


def test_forward_bitwise_after_load(trained, tmp_path):
    net, x = trained
    save_checkpoint_file(net, tmp_path / "n.ynet")
    again = load_checkpoint_file(tmp_path / "n.ynet")
    np.testing.assert_array_equal(again.forward(x, mode="eval")[0], net.forward(x, mode="eval")[0])
    for name, buf in net.named_buffers().items():
        np.testing.assert_array_equal(again.named_buffers()[name], buf)


def test_untrained_bn_round_trip(small_net):
    again = load_checkpoint(save_checkpoint(small_net))
    assert all(b is None for b in again.named_buffers().values())


@pytest.mark.parametrize("cut", [3, 10, 100, -5, -1])
def test_truncated(trained, cut):
    data = save_checkpoint(trained[0])
    with pytest.raises(TruncatedCheckpointError, match="truncated checkpoint"):
        load_checkpoint(data[:cut])


def test_bad_magic(trained):
    data = save_checkpoint(trained[0])
    with pytest.raises(BadMagicError):
        load_checkpoint(b"XNET" + data[4:])


def test_bad_version(trained):
    data = save_checkpoint(trained[0])
    with pytest.raises(VersionError):
        load_checkpoint(data[:4] + struct.pack("<I", 2) + data[8:])


def test_corrupted_payload(trained):
    data = bytearray(save_checkpoint(trained[0]))
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(ChecksumError):
        load_checkpoint(bytes(data))
