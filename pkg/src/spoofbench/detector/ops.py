"""Inference-mode tensor ops for the detector, on plain numpy arrays.

Activations are float64 with layout (channels, freq, time); weights come in
as float32 from the store and are promoted during the matmuls.  Convolutions
accumulate one GEMM per kernel offset, which keeps memory flat and hands the
hot loop to BLAS.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

BN_EPS = 1e-5
LN_EPS = 1e-5
POOL_EPS = 1e-9


# Scratch budget (elements) for the im2col buffer of one conv2d chunk.
_CONV_CHUNK_ELEMS = 6_000_000


def conv2d(x, weight, bias=None, stride=1, padding=1):
    """2-D convolution; x (Ci,F,T), weight (Co,Ci,kh,kw).

    im2col + GEMM, chunked along time to bound scratch memory.
    """
    co, ci, kh, kw = weight.shape
    if x.shape[0] != ci:
        raise ValueError(f"conv2d: input has {x.shape[0]} channels, weight expects {ci}")
    s = int(stride)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    fo = (x.shape[1] + 2 * padding - kh) // s + 1
    to = (x.shape[2] + 2 * padding - kw) // s + 1
    w2 = weight.astype(np.float64).reshape(co, ci * kh * kw)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
    out = np.empty((co, fo, to))
    chunk = max(1, _CONV_CHUNK_ELEMS // max(ci * kh * kw * fo, 1))
    for t0 in range(0, to, chunk):
        t1 = min(t0 + chunk, to)
        patch = windows[:, :, t0:t1].transpose(0, 3, 4, 1, 2).reshape(ci * kh * kw, -1)
        out[:, :, t0:t1] = (w2 @ patch).reshape(co, fo, t1 - t0)
    if bias is not None:
        out += bias.astype(np.float64)[:, None, None]
    return out


def conv1x1(x, weight, bias=None):
    """Pointwise convolution; weight (Co, Ci)."""
    c, f, t = x.shape
    out = (weight.astype(np.float64) @ x.reshape(c, -1)).reshape(-1, f, t)
    if bias is not None:
        out += bias.astype(np.float64)[:, None, None]
    return out


def depthwise_conv2d(x, weight, bias=None, padding=1):
    """Per-channel (fully grouped) convolution; weight (C, kh, kw)."""
    c, f, t = x.shape
    kh, kw = weight.shape[1:]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out = np.zeros_like(x)
    w = weight.astype(np.float64)
    for di in range(kh):
        for dj in range(kw):
            out += w[:, di, dj][:, None, None] * xp[:, di : di + f, dj : dj + t]
    if bias is not None:
        out += bias.astype(np.float64)[:, None, None]
    return out


def batch_norm(x, gamma, beta, mean, var):
    """Inference-mode BN over the channel axis with fixed running stats."""
    scale = gamma.astype(np.float64) / np.sqrt(var.astype(np.float64) + BN_EPS)
    shift = beta.astype(np.float64) - mean.astype(np.float64) * scale
    return x * scale[:, None, None] + shift[:, None, None]


def relu(x):
    return np.maximum(x, 0.0)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(x, axis=0):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps=LN_EPS):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma.astype(np.float64) + beta.astype(np.float64)


def attentive_stats_pool(h, w, b, v, eps=POOL_EPS):
    """Attention-weighted mean and stddev over time.

    h is (T, D); attention energies are v . tanh(W h_t + b), softmaxed over
    t.  Returns concat(mu, sigma), a vector of length 2D.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ValueError("attentive_stats_pool needs a nonempty (T, D) input")
    energies = np.tanh(h @ w.astype(np.float64).T + b.astype(np.float64)) @ v.astype(np.float64)
    alpha = softmax(energies, axis=0)
    mu = alpha @ h
    second = alpha @ (h * h)
    sigma = np.sqrt(np.maximum(second - mu * mu, 0.0) + eps)
    return np.concatenate([mu, sigma])


def aggregate_layers(stack, params, cfg):
    """Fuse per-layer representations into one (T, proj_dim) sequence.

    Each layer is projected to proj_dim, passed through GeLU and layer norm,
    then the layers are combined with softmax weights and normalized again.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] != cfg.n_layers or stack.shape[2] != cfg.in_dim:
        raise ValueError(
            f"aggregate_layers: expected ({cfg.n_layers}, T, {cfg.in_dim}), got {stack.shape}"
        )
    proj_w = params["proj.weight"].astype(np.float64)  # (L, proj, D)
    proj_b = params["proj.bias"].astype(np.float64)  # (L, proj)
    layers = np.einsum("ltd,lpd->ltp", stack, proj_w) + proj_b[:, None, :]
    layers = layer_norm(gelu(layers), params["ln1.gamma"], params["ln1.beta"])
    weights = softmax(params["layer_logits"].astype(np.float64), axis=0)
    fused = np.tensordot(weights, layers, axes=(0, 0))
    return layer_norm(fused, params["ln2.gamma"], params["ln2.beta"])
