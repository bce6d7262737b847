"""Reusable building blocks: linear maps, MLPs, attention, convolutions."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Module, Tensor, parameter


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = parameter(_uniform(rng, (fan_in, fan_out), bound))
        self.bias = parameter(_uniform(rng, (fan_out,), bound)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y

    def zero_(self) -> None:
        self.weight.data[...] = 0
        if self.bias is not None:
            self.bias.data[...] = 0


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Shared per-row MLP; ReLU between layers and, optionally, after the last."""

    def __init__(self, dims, rng, final_act: bool = False):
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self.final_act = final_act

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_act:
                x = ad.relu(x)
        return x

    @property
    def head(self) -> Linear:
        return self.layers[-1]


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng, kv_dim: int | None = None):
        if dim % heads:
            raise ValueError(f"{heads} heads do not divide width {dim}")
        kv_dim = kv_dim or dim
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(kv_dim, dim, rng)
        self.v = Linear(kv_dim, dim, rng)
        self.o = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        n, d = x.shape
        return ad.transpose(x.reshape(n, self.heads, d // self.heads), (1, 0, 2))

    def __call__(self, x: Tensor, memory: Tensor | None = None) -> Tensor:
        memory = x if memory is None else memory
        q, k, v = self._split(self.q(x)), self._split(self.k(memory)), self._split(self.v(memory))
        scale = 1.0 / math.sqrt(q.shape[-1])
        scores = ad.matmul(q, ad.transpose(k, (0, 2, 1))) * scale
        attn = ad.softmax(scores, axis=-1)
        ctx = ad.transpose(ad.matmul(attn, v), (1, 0, 2))
        return self.o(ctx.reshape(x.shape[0], -1))


class AttentionBlock(Module):
    """Pre-norm transformer block; pass ``memory`` for cross-attention."""

    def __init__(self, dim: int, heads: int, rng, kv_dim: int | None = None, ffn_mult: int = 2):
        self.norm1 = LayerNorm(dim)
        self.norm_kv = LayerNorm(kv_dim) if kv_dim else None
        self.attn = MultiHeadAttention(dim, heads, rng, kv_dim)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP([dim, ffn_mult * dim, dim], rng)

    def __call__(self, x: Tensor, memory: Tensor | None = None) -> Tensor:
        h = self.norm1(x)
        if memory is None:
            x = x + self.attn(h)
        else:
            mem = self.norm_kv(memory) if self.norm_kv is not None else memory
            x = x + self.attn(h, mem)
        return x + self.ffn(self.norm2(x))


class Conv2d(Module):
    """Channels-last 2-D convolution with bias."""

    def __init__(self, c_in: int, c_out: int, k: int, rng, stride: int = 1, padding: int | None = None):
        bound = 1.0 / math.sqrt(c_in * k * k)
        self.weight = parameter(_uniform(rng, (k, k, c_in, c_out), bound))
        self.bias = parameter(_uniform(rng, (c_out,), bound))
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.stride, self.padding) + self.bias


class Conv1d(Module):
    """Channels-last 1-D convolution over ``(batch, length, channels)`` with bias."""

    def __init__(self, c_in: int, c_out: int, k: int, padding: int, rng):
        bound = 1.0 / math.sqrt(c_in * k)
        self.weight = parameter(_uniform(rng, (k, c_in, c_out), bound))
        self.bias = parameter(_uniform(rng, (c_out,), bound))
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.weight, self.padding) + self.bias

    def over_sequences(self, x: Tensor, seq: np.ndarray) -> Tensor:
        """Convolve gathered sequences of rows of ``x`` (N, Ci); ``seq`` is (B, L).

        Returns ``(L, B, Co)``, i.e. ``self(gather_rows(x, seq))`` with the
        first two axes swapped. Convolution is linear, so every tap is applied
        to the N source rows first and the projected rows are gathered
        afterwards; this avoids materializing a (B, L, k*Ci) im2col buffer.
        """
        k, c_in, c_out = self.weight.shape
        n = x.shape[0]
        length = seq.shape[1]
        w = ad.transpose(self.weight, (1, 0, 2)).reshape(c_in, k * c_out)
        taps = (x @ w).reshape(n * k, c_out)
        taps = ad.concat([taps, Tensor(np.zeros((1, c_out), dtype=taps.dtype))], axis=0)
        src = np.arange(length)[:, None] + np.arange(k)[None, :] - self.padding
        valid = (src >= 0) & (src < length)
        src, valid = src.T, valid.T
        rows = seq.T[np.clip(src, 0, length - 1)] * k + np.arange(k)[:, None, None]
        rows = np.where(valid[:, :, None], rows, n * k)
        # rows is (k, L, B): the tap sum adds contiguous blocks
        return ad.gather_rows(taps, rows).sum(axis=0) + self.bias


def broadcast_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a ``(1, d)`` tensor into ``(n, d)``."""
    return ad.gather_rows(x, np.zeros(n, dtype=np.int64))


def chamfer_l2(p: Tensor, q: Tensor) -> Tensor:
    """Differentiable squared chamfer distance; nearest matches are held fixed."""
    return ad.nearest_sqdist(p, q).mean() + ad.nearest_sqdist(q, p).mean()


def arc_chamfer(p: Tensor, q: Tensor) -> Tensor:
    return ad.arcosh(1.0 + chamfer_l2(p, q))
