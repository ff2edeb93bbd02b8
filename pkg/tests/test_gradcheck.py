import numpy as np
import pytest

from stegnet.gradcheck import grad_check, layer_suite, run_suite
from stegnet.layers import BatchNorm, Conv2d, FullyConnected, Layer


def test_suite_covers_every_layer_kind():
    names = " ".join(name for name, _, _ in layer_suite())
    for kind in ("conv2d", "abs", "trunc", "relu", "batch_norm", "scale", "avg_pool",
                 "global_avg_pool", "fully_connected", "softmax_xent"):
        assert kind in names


@pytest.mark.parametrize("seed", [0, 1])
def test_suite_passes(seed):
    reports = run_suite(tol=1e-4, seed=seed)
    assert all(r.passed for r in reports), "\n".join(r.summary() for r in reports)


def test_fully_connected_is_exact():
    rng = np.random.default_rng(0)
    layer = FullyConnected(rng.standard_normal((4, 6)), rng.standard_normal(4))
    assert grad_check(layer, rng.standard_normal((3, 6))).max_error <= 1e-8


def test_conv_random_instance():
    rng = np.random.default_rng(9)
    rep = grad_check(Conv2d(rng.standard_normal((3, 2, 3, 3)), pad=1), rng.standard_normal((2, 2, 5, 5)))
    assert rep.passed and set(rep.errors) == {"input", "weight"}


def test_batch_norm_train_mode_paths():
    x = 2.0 * np.random.default_rng(3).standard_normal((3, 2, 4, 4)) - 1.0
    assert grad_check(BatchNorm(2), x).max_error <= 1e-4


class _WrongGradient(Layer):
    def forward(self, x, train=False):
        return x * x

    def backward(self, dy, need_input_grad=True):
        return dy * self._x if hasattr(self, "_x") else dy


def test_detects_wrong_gradient():
    rep = grad_check(_WrongGradient(), np.random.default_rng(0).standard_normal((2, 3)) + 3)
    assert not rep.passed
    assert rep.worst and rep.worst[0].group == "input"
    assert "FAIL" in rep.summary()


def test_rejects_single_precision_params():
    layer = FullyConnected(np.zeros((2, 2), dtype=np.float32), np.zeros(2, dtype=np.float32))
    with pytest.raises(TypeError):
        grad_check(layer, np.zeros((1, 2)))
