import sys

import numpy as np
import pytest

from birads_ssdl.autograd import Tensor


def numeric_grad(fn, arrays, index, h=1e-3):
    """Central finite differences of scalar ``fn(*arrays)`` w.r.t. ``arrays[index]``."""
    base = [a.copy() for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + h
        up = fn(*base)
        target[i] = orig - h
        down = fn(*base)
        target[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = max(np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b)), 1e-12)
    return num / den


def gradcheck(build, arrays, h=1e-3):
    """Compare autograd against finite differences for every input array.

    ``build(*tensors)`` must return a scalar Tensor. All work is float64.
    Returns the largest relative error over the inputs.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(*tensors).backward()

    def value(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    worst = 0.0
    for k, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(arrays[k])
        worst = max(worst, relative_error(analytic, numeric_grad(value, arrays, k, h)))
    return worst


def spaced_values(rng, shape, gap=0.01):
    """Distinct values at least ``gap`` apart and away from zero, in random order.

    Keeps max-pool and ReLU kinks further than a finite-difference step.
    """
    n = int(np.prod(shape))
    vals = (np.arange(n) + 1) * gap
    vals[::2] *= -1
    return rng.permutation(vals).reshape(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines at the end of the run."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
