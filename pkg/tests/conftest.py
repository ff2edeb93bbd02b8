import numpy as np
import pytest

from stegnet.dataset import PairSet
from stegnet.network import NetConfig, build_network, init_xavier
from stegnet.stego import EmbedParams, lsbm_embed


def conv_oracle(x, w, stride=1, pad=0):
    """Direct summation cross-correlation, one output element at a time."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    y = np.zeros((n, o, ho, wo))
    for b in range(n):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ch in range(c):
                        for a in range(k):
                            for q in range(k):
                                acc += xp[b, ch, i * stride + a, j * stride + q] * w[f, ch, a, q]
                    y[b, f, i, j] = acc
    return y


def pool_oracle(x, k, stride, pad):
    """Window mean over in-bounds pixels only."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    y = np.zeros((n, c, ho, wo))
    for i in range(ho):
        for j in range(wo):
            r0, c0 = i * stride - pad, j * stride - pad
            rs = [r for r in range(r0, r0 + k) if 0 <= r < h]
            cs = [q for q in range(c0, c0 + k) if 0 <= q < w]
            y[:, :, i, j] = x[:, :, rs][:, :, :, cs].mean(axis=(2, 3))
    return y


def rel_err(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def make_pairs(n, size=32, seed=0, beta=0.5, gray=None):
    """Covers are seeded noise (or constant ``gray``); stegos are +/-1 embedded copies."""
    rng = np.random.default_rng(seed)
    if gray is None:
        covers = rng.integers(40, 216, size=(n, size, size)).astype(np.uint8)
    else:
        covers = np.full((n, size, size), gray, dtype=np.uint8)
    stegos = np.stack([lsbm_embed(c, EmbedParams.from_change_rate(beta, seed * 1000 + i))
                       for i, c in enumerate(covers)])
    return PairSet(covers, stegos)


@pytest.fixture
def small_net():
    return init_xavier(build_network(NetConfig(input_size=32)), seed=3)


# the 8 flips/rotations written independently of stegnet.dataset.dihedral
DIHEDRAL = [
    lambda m: m,
    lambda m: np.rot90(m, 1),
    lambda m: np.rot90(m, 2),
    lambda m: np.rot90(m, 3),
    lambda m: m[:, ::-1],
    lambda m: m[::-1, :],
    lambda m: m.T,
    lambda m: m[::-1, ::-1].T,
]


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
