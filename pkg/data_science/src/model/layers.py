"""
Forward/backward primitives for the numpy network.

Every forward returns its output plus the cache its backward needs. Shapes use
B = batch, N = time steps, D = model width, H = heads.
"""
from typing import Dict, Optional, Tuple

import numpy as np

LAYER_NORM_EPS = 1e-5
BATCH_NORM_EPS = 1e-5


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal encoding: PE[i, 2m] = sin(i / 10000^(2m/d)), PE[i, 2m+1] = cos(same angle)."""
    positions = np.arange(n)[:, None]
    even = np.arange(0, d, 2)[None, :]
    angles = positions / np.power(10000.0, even / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, :d // 2])
    return pe


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """y = x @ w + b over the last axis; w is (in, out)."""
    return x @ w + b, x


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db)."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, x2.T @ dy2, dy2.sum(axis=0)


def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), x > 0.0


def relu_backward(dy: np.ndarray, active: np.ndarray) -> np.ndarray:
    return dy * active


def dropout_forward(x: np.ndarray, rate: float, rng: Optional[np.random.Generator],
                    train: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout; identity (mask None) in eval mode or at rate 0."""
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("Train-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dy: np.ndarray, keep: Optional[np.ndarray]) -> np.ndarray:
    return dy if keep is None else dy * keep


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> Tuple[np.ndarray, tuple]:
    mean = x.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + LAYER_NORM_EPS)
    x_hat = (x - mean) * inv_std
    return x_hat * gamma + beta, (x_hat, inv_std)


def layer_norm_backward(dy: np.ndarray, cache: tuple, gamma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dgamma, dbeta)."""
    x_hat, inv_std = cache
    g = dy * gamma
    dx = (g - g.mean(axis=-1, keepdims=True) - x_hat * (g * x_hat).mean(axis=-1, keepdims=True)) * inv_std
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * x_hat).sum(axis=axes), dy.sum(axis=axes)


def batch_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray,
                       running_var: np.ndarray, train: bool,
                       momentum: float) -> Tuple[np.ndarray, tuple, Optional[Tuple[np.ndarray, np.ndarray]]]:
    """
    Batch normalization over the rows of a 2-D input.

    Train mode normalizes with the batch statistics and returns the updated
    running statistics momentum * running + (1 - momentum) * batch; eval mode
    uses the running statistics and returns None for the update.
    """
    if train:
        mean, var = x.mean(axis=0), x.var(axis=0)
        updated = (momentum * running_mean + (1.0 - momentum) * mean,
                   momentum * running_var + (1.0 - momentum) * var)
    else:
        mean, var, updated = running_mean, running_var, None
    inv_std = 1.0 / np.sqrt(var + BATCH_NORM_EPS)
    x_hat = (x - mean) * inv_std
    return x_hat * gamma + beta, (x_hat, inv_std, train), updated


def batch_norm_backward(dy: np.ndarray, cache: tuple, gamma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dgamma, dbeta)."""
    x_hat, inv_std, train = cache
    g = dy * gamma
    if train:
        dx = (g - g.mean(axis=0) - x_hat * (g * x_hat).mean(axis=0)) * inv_std
    else:
        dx = g * inv_std
    return dx, (dy * x_hat).sum(axis=0), dy.sum(axis=0)


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def attention_forward(x: np.ndarray, p: Dict[str, np.ndarray], heads: int) -> Tuple[np.ndarray, tuple]:
    """
    Multi-head self-attention, no masking.

    Args:
        x (np.ndarray): B x N x D input
        p (Dict[str, np.ndarray]): wq, bq, wk, bk, wv, bv, wo, bo
        heads (int): Number of heads H (D divisible by H)
    """
    q = _split_heads(x @ p["wq"] + p["bq"], heads)
    k = _split_heads(x @ p["wk"] + p["bk"], heads)
    v = _split_heads(x @ p["wv"] + p["bv"], heads)
    scale = 1.0 / np.sqrt(q.shape[-1])
    probs = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
    context = _merge_heads(probs @ v)
    return context @ p["wo"] + p["bo"], (x, q, k, v, probs, context, scale)


def attention_backward(dy: np.ndarray, cache: tuple, p: Dict[str, np.ndarray],
                       heads: int) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Returns (dx, parameter gradients keyed like p)."""
    x, q, k, v, probs, context, scale = cache
    d_context, dwo, dbo = linear_backward(dy, context, p["wo"])
    d_heads = _split_heads(d_context, heads)
    dv = probs.transpose(0, 1, 3, 2) @ d_heads
    d_probs = d_heads @ v.transpose(0, 1, 3, 2)
    d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True)) * scale
    dq = d_scores @ k
    dk = d_scores.transpose(0, 1, 3, 2) @ q
    grads = {"wo": dwo, "bo": dbo}
    dx = np.zeros_like(x)
    for name, d_proj in (("q", dq), ("k", dk), ("v", dv)):
        dx_part, dw, db = linear_backward(_merge_heads(d_proj), x, p[f"w{name}"])
        dx += dx_part
        grads[f"w{name}"], grads[f"b{name}"] = dw, db
    return dx, grads
