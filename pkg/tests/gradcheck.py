"""Central finite-difference gradient oracle shared by the test suite.

Kept deliberately independent of the library's backward passes: gradients are
estimated by perturbing one input element at a time, in double precision.
"""

import numpy as np

STEP = 1e-5
TOL = 1e-4


def numerical_grad(f, x, step=STEP):
    """Central-difference gradient of the scalar function f at array x."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_error(analytic, numeric):
    """Max elementwise difference normalized by the larger gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1e-8, np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def assert_grad_close(analytic, numeric, context=""):
    err = rel_error(analytic, numeric)
    assert err < TOL, f"{context}: relative error {err:.3e} >= {TOL}"


def spaced_values(rng, shape, spacing=0.01):
    """Random tensor whose values are pairwise separated by at least `spacing`.

    Keeps max-pool argmaxes and relu signs stable under the perturbation step.
    """
    size = int(np.prod(shape))
    levels = np.arange(1, size + 1, dtype=np.float64) * spacing
    signs = np.where(np.arange(size) % 2 == 0, 1.0, -1.0)
    return rng.permutation(levels * signs).reshape(shape)
