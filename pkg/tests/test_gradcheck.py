"""The finite-difference harness itself: it passes on correct ops and flags a
deliberately wrong gradient."""

import numpy as np

import shufflestereo.tensor as T
from shufflestereo import gradsuite
from shufflestereo.tensor import Tensor, grad_check


def test_suite_passes_on_two_seeds():
    worst = gradsuite.run_suite(seeds=2)
    failures = {n: r for n, r in worst.items() if not r.passed}
    assert not failures, failures


def test_suite_covers_all_declared_ops():
    names = gradsuite.op_names()
    assert len(names) == len(set(names))
    for required in ("conv2d", "conv3d", "deconv2d", "deconv3d", "fm_block",
                     "fuse", "hourglass2d", "hourglass3d_reduced",
                     "regress_topk2", "batchnorm"):
        assert required in names


def test_wrong_gradient_is_flagged():
    def broken(a):
        # forward is a*a but the registered backward claims d/da = a
        out = Tensor(a.data * a.data, op="broken", _children=(a,))
        out.requires_grad = True
        out._backward = lambda g: [(a, g * a.data)]
        return out

    x = Tensor(np.random.default_rng(0).standard_normal((3, 3)) + 2.0,
               requires_grad=True, dtype=np.float64)
    report = grad_check(broken, [x])
    assert not report.passed


def test_grad_check_reports_tight_error_for_linear_op():
    x = Tensor(np.random.default_rng(1).standard_normal((4, 4)),
               requires_grad=True, dtype=np.float64)
    report = grad_check(lambda a: T.mul(a, 3.0), [x])
    assert report.passed
    assert report.max_rel_err < 1e-8
