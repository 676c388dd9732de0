"""Layer forward/backward primitives on float64 numpy arrays.

Everything here is a pure function: outputs depend only on explicit inputs,
so the ops are safe to call from multiple threads on disjoint data. Spatial
tensors are channels-last, either a single instance (H, W, C) or a batch
(N, H, W, C); single instances are promoted to a batch of one internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operands do not conform; the message names the offending dimension."""


@dataclass
class LayerGradients:
    """Result of one backward pass: named parameter grads plus the input grad."""

    parameter_grads: dict[str, np.ndarray]
    input_grad: np.ndarray


@dataclass(frozen=True)
class RunningStats:
    """Exponential-moving-average channel statistics kept by batch norm."""

    mean: np.ndarray
    var: np.ndarray

    @staticmethod
    def initial(channels: int) -> "RunningStats":
        return RunningStats(np.zeros(channels), np.ones(channels))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Promote (H, W, C) to (1, H, W, C); report whether promotion happened."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected a 3-d or 4-d spatial tensor, got ndim={x.ndim}")


def _pad_amounts(kernel: int, size: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        if kernel > size:
            raise ShapeError(
                f"kernel extent {kernel} exceeds spatial extent {size} under valid padding"
            )
        return 0, 0
    if padding == "same":
        before = (kernel - 1) // 2
        return before, kernel - 1 - before
    raise ShapeError(f"unknown padding {padding!r}, expected 'valid' or 'same'")


def _pad_input(x: np.ndarray, kp: int, kq: int, padding: str) -> np.ndarray:
    ph = _pad_amounts(kp, x.shape[1], padding)
    pw = _pad_amounts(kq, x.shape[2], padding)
    if ph == (0, 0) and pw == (0, 0):
        return x
    return np.pad(x, ((0, 0), ph, pw, (0, 0)))


def _check_conv_shapes(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None) -> None:
    if weights.ndim != 4:
        raise ShapeError(f"conv weights must be (P, Q, M, K), got ndim={weights.ndim}")
    if x.shape[3] != weights.shape[2]:
        raise ShapeError(
            f"input channel count M={x.shape[3]} does not match weight M={weights.shape[2]}"
        )
    if bias is not None and bias.shape != (weights.shape[3],):
        raise ShapeError(
            f"bias shape {bias.shape} does not match output channel count K={weights.shape[3]}"
        )


def conv2d_forward(
    x: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    padding: str = "valid",
) -> np.ndarray:
    """Cross-correlate x with a (P, Q, M, K) filter bank and add the per-map bias.

    Each output element is ``bias[k] + sum_{m,p,q} weights[p,q,m,k] * x[i+p, j+q, m]``.
    Valid padding shrinks the output to (H-P+1, W-Q+1); same padding zero-fills
    so the spatial extent is preserved.
    """
    xb, single = _as_batch(x)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_conv_shapes(xb, weights, bias)
    p_ext, q_ext, _, k_out = weights.shape
    xp = _pad_input(xb, p_ext, q_ext, padding)
    h_out = xp.shape[1] - p_ext + 1
    w_out = xp.shape[2] - q_ext + 1
    out = np.empty((xb.shape[0], h_out, w_out, k_out))
    out[:] = bias
    # Small kernels: a shifted matmul per tap beats im2col on these patch sizes.
    for p in range(p_ext):
        for q in range(q_ext):
            out += xp[:, p : p + h_out, q : q + w_out, :] @ weights[p, q]
    return out[0] if single else out


def conv2d_backward(
    x: np.ndarray,
    weights: np.ndarray,
    output_grad: np.ndarray,
    padding: str = "valid",
) -> LayerGradients:
    """Chain-rule gradients of conv2d_forward for weights, bias, and input."""
    xb, single = _as_batch(x)
    weights = np.asarray(weights, dtype=np.float64)
    _check_conv_shapes(xb, weights, None)
    g, _ = _as_batch(output_grad)
    p_ext, q_ext, m_in, k_out = weights.shape
    xp = _pad_input(xb, p_ext, q_ext, padding)
    h_out = xp.shape[1] - p_ext + 1
    w_out = xp.shape[2] - q_ext + 1
    if g.shape != (xb.shape[0], h_out, w_out, k_out):
        raise ShapeError(
            f"output_grad shape {g.shape} does not match forward output "
            f"{(xb.shape[0], h_out, w_out, k_out)}"
        )
    grad_w = np.empty_like(weights)
    grad_x_pad = np.zeros_like(xp)
    for p in range(p_ext):
        for q in range(q_ext):
            window = xp[:, p : p + h_out, q : q + w_out, :]
            grad_w[p, q] = np.tensordot(window, g, axes=([0, 1, 2], [0, 1, 2]))
            grad_x_pad[:, p : p + h_out, q : q + w_out, :] += g @ weights[p, q].T
    grad_b = g.sum(axis=(0, 1, 2))
    ph, _ = _pad_amounts(p_ext, xb.shape[1], padding)
    pw, _ = _pad_amounts(q_ext, xb.shape[2], padding)
    grad_x = grad_x_pad[:, ph : ph + xb.shape[1], pw : pw + xb.shape[2], :]
    if single:
        grad_x = grad_x[0]
    return LayerGradients({"weights": grad_w, "bias": grad_b}, grad_x)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    stats: RunningStats,
    mode: str,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Normalize per channel; returns (output, updated stats, backward cache).

    Train mode normalizes with batch statistics over every non-channel axis and
    folds them into the running stats; infer mode applies the running stats and
    returns them unchanged (cache is None). The eps keeps a zero-variance batch
    finite.
    """
    x = np.asarray(x, dtype=np.float64)
    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"gamma/beta shapes {gamma.shape}/{beta.shape} do not match channel count {channels}"
        )
    if mode == "train":
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * inv_std
        new_stats = RunningStats(
            momentum * stats.mean + (1.0 - momentum) * mean,
            momentum * stats.var + (1.0 - momentum) * var,
        )
        return gamma * xhat + beta, new_stats, (xhat, inv_std)
    if mode == "infer":
        xhat = (x - stats.mean) / np.sqrt(stats.var + eps)
        return gamma * xhat + beta, stats, None
    raise ValueError(f"unknown mode {mode!r}, expected 'train' or 'infer'")


def batchnorm_backward(
    gamma: np.ndarray, cache: tuple, output_grad: np.ndarray
) -> LayerGradients:
    """Backward pass through train-mode batch normalization."""
    xhat, inv_std = cache
    g = np.asarray(output_grad, dtype=np.float64)
    axes = tuple(range(g.ndim - 1))
    count = xhat.size // xhat.shape[-1]
    grad_gamma = (g * xhat).sum(axis=axes)
    grad_beta = g.sum(axis=axes)
    grad_xhat = g * gamma
    grad_x = (
        inv_std
        / count
        * (count * grad_xhat - grad_xhat.sum(axis=axes) - xhat * (grad_xhat * xhat).sum(axis=axes))
    )
    return LayerGradients({"gamma": grad_gamma, "beta": grad_beta}, grad_x)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(x) > 0.0, output_grad, 0.0)


def _pool_geometry(x: np.ndarray, window) -> tuple[int, int]:
    wh, ww = (window, window) if np.isscalar(window) else window
    if x.shape[1] % wh != 0:
        raise ShapeError(f"height {x.shape[1]} is not divisible by pool window {wh}")
    if x.shape[2] % ww != 0:
        raise ShapeError(f"width {x.shape[2]} is not divisible by pool window {ww}")
    return wh, ww


def maxpool2d(x: np.ndarray, window) -> np.ndarray:
    """Non-overlapping window maximum; stride equals the window extent."""
    xb, single = _as_batch(x)
    wh, ww = _pool_geometry(xb, window)
    n, h, w, c = xb.shape
    tiled = xb.reshape(n, h // wh, wh, w // ww, ww, c)
    out = tiled.max(axis=(2, 4))
    return out[0] if single else out


def maxpool2d_backward(x: np.ndarray, window, output_grad: np.ndarray) -> np.ndarray:
    """Route each window's gradient to the first maximal element of that window."""
    xb, single = _as_batch(x)
    g, _ = _as_batch(output_grad)
    wh, ww = _pool_geometry(xb, window)
    n, h, w, c = xb.shape
    ho, wo = h // wh, w // ww
    windows = xb.reshape(n, ho, wh, wo, ww, c).transpose(0, 1, 3, 5, 2, 4).reshape(
        n, ho, wo, c, wh * ww
    )
    winners = windows.argmax(axis=-1)
    routed = np.zeros_like(windows)
    np.put_along_axis(routed, winners[..., None], g[..., None], axis=-1)
    grad = (
        routed.reshape(n, ho, wo, c, wh, ww).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)
    )
    return grad[0] if single else grad


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Spatial mean per channel: (N, H, W, C) -> (N, C)."""
    xb, single = _as_batch(x)
    out = xb.mean(axis=(1, 2))
    return out[0] if single else out


def global_avg_pool_backward(x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    xb, single = _as_batch(x)
    g = np.asarray(output_grad, dtype=np.float64).reshape(xb.shape[0], xb.shape[3])
    grad = np.broadcast_to(
        g[:, None, None, :] / (xb.shape[1] * xb.shape[2]), xb.shape
    ).copy()
    return grad[0] if single else grad


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map x @ weights + bias on (N, D) or a single (D,) vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"input feature count {x.shape[-1]} does not match weight rows {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise ShapeError(
            f"bias shape {bias.shape} does not match output count {weights.shape[1]}"
        )
    return x @ weights + bias


def dense_backward(x: np.ndarray, weights: np.ndarray, output_grad: np.ndarray) -> LayerGradients:
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(output_grad, dtype=np.float64)
    if x.ndim == 1:
        grad_w = np.outer(x, g)
        grad_b = g.copy()
    else:
        grad_w = x.T @ g
        grad_b = g.sum(axis=0)
    return LayerGradients({"weights": grad_w, "bias": grad_b}, g @ weights.T)


def concatenate(parts, axis: int = -1) -> np.ndarray:
    """Join tensors along one axis; every other axis must agree."""
    parts = [np.asarray(p, dtype=np.float64) for p in parts]
    first = parts[0]
    ax = axis % first.ndim
    for i, p in enumerate(parts[1:], start=1):
        if p.ndim != first.ndim:
            raise ShapeError(f"part {i} has ndim={p.ndim}, expected {first.ndim}")
        for d in range(first.ndim):
            if d != ax and p.shape[d] != first.shape[d]:
                raise ShapeError(
                    f"part {i} disagrees on axis {d}: {p.shape[d]} vs {first.shape[d]}"
                )
    return np.concatenate(parts, axis=ax)


def concatenate_backward(output_grad: np.ndarray, sizes, axis: int = -1):
    """Split the incoming gradient back into the concatenated parts."""
    cuts = np.cumsum(sizes)[:-1]
    return np.split(np.asarray(output_grad), cuts, axis=axis)


def residual_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum of two equally shaped tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"add requires equal shapes, got {a.shape} vs {b.shape}")
    return a + b


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator):
    """Inverted dropout: zero a `rate` fraction and rescale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(mask: np.ndarray, rate: float, output_grad: np.ndarray) -> np.ndarray:
    return np.asarray(output_grad) * mask / (1.0 - rate)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax over the last axis, max-subtracted for stability."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


PROB_FLOOR = 1e-12


def cross_entropy(probs: np.ndarray, label) -> np.ndarray | float:
    """-log(probs[label]) with a floor clamp; batched when probs is 2-d."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 1:
        return -np.log(max(p[int(label)], PROB_FLOOR))
    picked = p[np.arange(p.shape[0]), np.asarray(label, dtype=np.intp)]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def mean_loss_logit_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the batch-mean cross entropy wrt the softmax logits."""
    p = np.asarray(probs, dtype=np.float64)
    grad = p.copy()
    rows = np.arange(p.shape[0])
    grad[rows, np.asarray(labels, dtype=np.intp)] -= 1.0
    return grad / p.shape[0]
