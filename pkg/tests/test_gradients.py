"""Finite-difference checks for every differentiable primitive.

Each test compares the analytic gradient against central differences
(eps=1e-3, float64) through a random-weighted scalar reduction, over a
handful of seeds.  Tolerance is 1e-4 relative error throughout.
"""

import numpy as np

from setrans import Tensor
from setrans import tensor as T

from gradutil import away_from_zero, gradcheck, weighted_sum

TOL = 1e-4
SEEDS = range(3)


def test_grad_add_broadcast():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda a, b: weighted_sum(a + b, np.random.default_rng(99)),
            [rng.normal(size=(3, 4)), rng.normal(size=(4,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_mul_broadcast():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda a, b: weighted_sum(a * b, np.random.default_rng(99)),
            [rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 1))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_matmul():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda a, b: weighted_sum(a @ b, np.random.default_rng(99)),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 5))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_matmul_batched():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda a, b: weighted_sum(a @ b, np.random.default_rng(99)),
            [rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_reshape_transpose_sum_mean():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)

        def f(a):
            b = a.reshape(4, 6).transpose((1, 0))
            return weighted_sum(b.mean(axis=0) + b.sum(axis=1).mean(),
                                np.random.default_rng(99))

        err = gradcheck(f, [rng.normal(size=(2, 3, 4))])
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_relu():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = away_from_zero(rng.normal(size=(4, 5)))
        err = gradcheck(
            lambda a: weighted_sum(T.relu(a), np.random.default_rng(99)), [x]
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_sigmoid_softplus():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(3, 4)) * 2.0
        for op in (T.sigmoid, T.softplus):
            err = gradcheck(
                lambda a, op=op: weighted_sum(op(a), np.random.default_rng(99)), [x]
            )
            assert err < TOL, f"seed {seed} {op.__name__}: {err}"


def test_grad_softmax_log_softmax():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(4, 6))
        for op in (T.softmax, T.log_softmax):
            err = gradcheck(
                lambda a, op=op: weighted_sum(op(a), np.random.default_rng(99)), [x]
            )
            assert err < TOL, f"seed {seed} {op.__name__}: {err}"


def test_grad_linear():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda x, w, b: weighted_sum(T.linear(x, w, b), np.random.default_rng(99)),
            [rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=(4,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_conv2d():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda x, k, b: weighted_sum(T.conv2d(x, k, b), np.random.default_rng(99)),
            [rng.normal(size=(2, 2, 4, 5)),
             rng.normal(size=(3, 2, 3, 3)),
             rng.normal(size=(3,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_avg_pool2d():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda x: weighted_sum(T.avg_pool2d(x), np.random.default_rng(99)),
            [rng.normal(size=(2, 2, 4, 6))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_adaptive_avg_pool2d():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda x: weighted_sum(T.adaptive_avg_pool2d(x, 3),
                                   np.random.default_rng(99)),
            [rng.normal(size=(2, 2, 7, 3))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_max_over_time():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        # well-separated values so the argmax can't flip under the probe
        x = rng.permuted(np.arange(2 * 5 * 3, dtype=np.float64)).reshape(2, 5, 3)
        err = gradcheck(
            lambda a: weighted_sum(T.max_over_time(a), np.random.default_rng(99)), [x]
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_batch_norm_train():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)

        def f(x, g, b):
            # fresh buffers per call; the in-place update must not leak
            # state between finite-difference probes
            rm, rv = np.zeros(3), np.ones(3)
            return weighted_sum(
                T.batch_norm2d(x, g, b, rm, rv, training=True),
                np.random.default_rng(99),
            )

        err = gradcheck(
            f,
            [rng.normal(size=(3, 3, 2, 4)),
             rng.normal(size=(3,)) + 1.5,
             rng.normal(size=(3,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_batch_norm_eval():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        rm = rng.normal(size=3)
        rv = rng.uniform(0.5, 2.0, size=3)

        def f(x, g, b):
            return weighted_sum(
                T.batch_norm2d(x, g, b, rm.copy(), rv.copy(), training=False),
                np.random.default_rng(99),
            )

        err = gradcheck(
            f,
            [rng.normal(size=(2, 3, 2, 3)),
             rng.normal(size=(3,)) + 1.5,
             rng.normal(size=(3,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_layer_norm():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        err = gradcheck(
            lambda x, g, b: weighted_sum(T.layer_norm(x, g, b),
                                         np.random.default_rng(99)),
            [rng.normal(size=(3, 4, 6)),
             rng.normal(size=(6,)) + 1.5,
             rng.normal(size=(6,))],
        )
        assert err < TOL, f"seed {seed}: {err}"


def test_grad_composite_chain():
    """A conv -> pool -> flatten -> linear -> softmax chain end to end."""
    for seed in SEEDS:
        rng = np.random.default_rng(seed)

        def f(x, k, w):
            h = T.relu(T.conv2d(x, k))
            h = T.avg_pool2d(h)
            h = h.reshape(2, 2 * 2 * 3)
            return weighted_sum(T.log_softmax(T.linear(h, w)),
                                np.random.default_rng(99))

        err = gradcheck(
            f,
            [away_from_zero(rng.normal(size=(2, 2, 4, 6)), 0.3),
             rng.normal(size=(2, 2, 3, 3)) * 0.5,
             rng.normal(size=(12, 4))],
        )
        assert err < 5 * TOL, f"seed {seed}: {err}"
