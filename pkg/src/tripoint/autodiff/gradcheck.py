"""Central finite-difference checks of reverse-mode gradients.

A check builds a scalar by projecting the output of ``fn`` onto a fixed random
direction, backpropagates once, then perturbs randomly chosen coordinates of
the leaves by ``+-h`` and compares. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

STEP = 1e-3
TOLERANCE = 1e-3
PROBES = 24
# gradients below this magnitude are compared absolutely
FLOOR = 1e-4


@dataclass
class GradCheck:
    name: str
    probes: int
    max_rel_error: float
    tol: float = TOLERANCE
    # probes whose +-h evaluations switched a ReLU/argmax/matching decision
    frozen: int = 0

    @property
    def passed(self) -> bool:
        return self.probes > 0 and self.max_rel_error < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name:<20} probes={self.probes:<3} frozen={self.frozen:<3} "
            f"max_rel_err={self.max_rel_error:.2e}"
        )


def relative_error(analytic: float, numeric: float, floor: float = FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def leaf(array) -> Tensor:
    return Tensor(np.array(array, dtype=np.float64), requires_grad=True)


def check_gradients(
    name: str,
    fn,
    leaves,
    probes: int = PROBES,
    h: float = STEP,
    tol: float = TOLERANCE,
    seed: int = 0,
) -> GradCheck:
    """Compare backprop against central differences for ``fn()`` w.r.t. ``leaves``.

    ``fn`` takes no arguments and rebuilds its graph from the leaves on every
    call. Probes are spread over the leaves so small tensors (biases, gains)
    are exercised as often as large ones.

    The reference pass records its discrete decisions. A probe whose ``+-h``
    passes make different decisions straddles a kink, where a central
    difference does not estimate the derivative; it is re-evaluated with the
    recorded decisions replayed (the smooth piece the gradient belongs to)
    and counted in ``frozen``.
    """
    leaves = [t for t in leaves if t.data.size]
    for t in leaves:
        if t.dtype != np.float64:
            raise TypeError(f"{name}: gradient checks need float64 leaves, got {t.dtype}")
        t.grad = None
    rng = np.random.default_rng(seed)
    with T.record_decisions() as tape:
        out = fn()
    proj = rng.standard_normal(out.shape)
    reference = tape.signature()

    def scalar(replay: bool) -> tuple[float, bool]:
        if replay:
            with T.replay_decisions(tape):
                value = float((fn().data * proj).sum())
            if tape.pos != len(tape.items):
                raise RuntimeError(f"{name}: replay consumed {tape.pos} of {len(tape.items)} decisions")
            return value, True
        with T.record_decisions() as trial:
            value = float((fn().data * proj).sum())
        return value, trial.signature() == reference

    T.backward(T.sum_reduce(T.mul(out, Tensor(proj))))
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]
    worst, frozen = 0.0, 0
    for i in range(probes):
        k = i % len(leaves) if i < len(leaves) else int(rng.integers(len(leaves)))
        t = leaves[k]
        pos = np.unravel_index(int(rng.integers(t.data.size)), t.shape)
        old = t.data[pos]
        values = []
        for replay in (False, True):
            t.data[pos] = old + h
            f_plus, same_plus = scalar(replay)
            t.data[pos] = old - h
            f_minus, same_minus = scalar(replay)
            t.data[pos] = old
            values = (f_plus, f_minus)
            if same_plus and same_minus:
                break
            frozen += 1
        numeric = (values[0] - values[1]) / (2 * h)
        worst = max(worst, relative_error(float(grads[k][pos]), numeric))
    return GradCheck(name, probes, worst, tol, frozen)


def _separated(rng, shape, gap: float = 0.05) -> np.ndarray:
    """Distinct values at least ``gap`` apart, so max/min/relu stay away from kinks."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2 + 0.5) * gap
    return vals.reshape(shape)


def op_cases(rng):
    """``(name, fn, leaves)`` for every differentiable op."""
    a, b = leaf(rng.normal(size=(4, 5))), leaf(rng.normal(size=(4, 5)))
    row = leaf(rng.normal(size=(1, 5)))
    pos = leaf(rng.uniform(0.5, 2.0, size=(4, 5)))
    big = leaf(rng.uniform(1.2, 3.0, size=(4, 5)))
    m1, m2 = leaf(rng.normal(size=(4, 6))), leaf(rng.normal(size=(6, 3)))
    b1, b2 = leaf(rng.normal(size=(2, 4, 6))), leaf(rng.normal(size=(2, 6, 3)))
    sep = leaf(_separated(rng, (4, 5, 3)))
    p3, q3 = leaf(rng.normal(size=(6, 3))), leaf(rng.normal(size=(9, 3)))
    gamma, beta = leaf(rng.normal(size=5)), leaf(rng.normal(size=5))
    img = leaf(rng.normal(size=(2, 6, 6, 3)))
    k2 = leaf(rng.normal(size=(3, 3, 3, 4)))
    seq = leaf(rng.normal(size=(3, 7, 4)))
    k1 = leaf(rng.normal(size=(3, 4, 5)))
    idx = rng.integers(0, 4, size=(3, 7))
    yield "add (broadcast)", lambda: T.add(a, row), [a, row]
    yield "sub", lambda: T.sub(a, b), [a, b]
    yield "mul", lambda: T.mul(a, b), [a, b]
    yield "div", lambda: T.div(a, pos), [a, pos]
    yield "neg", lambda: T.neg(a), [a]
    yield "relu", lambda: T.relu(sep), [sep]
    yield "exp", lambda: T.exp(a), [a]
    yield "log", lambda: T.log(pos), [pos]
    yield "sqrt", lambda: T.sqrt(pos), [pos]
    yield "sin", lambda: T.sin(a), [a]
    yield "cos", lambda: T.cos(a), [a]
    yield "arcosh", lambda: T.arcosh(big), [big]
    yield "matmul", lambda: T.matmul(m1, m2), [m1, m2]
    yield "matmul (batched)", lambda: T.matmul(b1, b2), [b1, b2]
    yield "pairwise_sqdist", lambda: T.pairwise_sqdist(p3, q3), [p3, q3]
    yield "nearest_sqdist", lambda: T.nearest_sqdist(p3, q3), [p3, q3]
    yield "reshape", lambda: T.reshape(a, (5, 4)) * T.reshape(b, (5, 4)), [a, b]
    yield "transpose", lambda: T.matmul(T.transpose(b1, (0, 2, 1)), b1), [b1]
    yield "slice", lambda: T.slice_(b1, (slice(None), slice(1, 3))), [b1]
    yield "concat", lambda: T.concat([a, b, row], axis=0), [a, b, row]
    yield "gather_rows", lambda: T.gather_rows(a, idx), [a]
    yield "repeat_rows", lambda: T.repeat_rows(a, 3) * T.repeat_rows(b, 3), [a, b]
    yield "sum_reduce", lambda: T.sum_reduce(b1 * b1, axis=1), [b1]
    yield "mean_reduce", lambda: T.mean_reduce(b1 * b1, axis=(1, 2)), [b1]
    yield "max_reduce", lambda: T.max_reduce(sep, axis=1), [sep]
    yield "min_reduce", lambda: T.min_reduce(sep, axis=2), [sep]
    yield "softmax", lambda: T.softmax(b1, axis=-1), [b1]
    yield "layer_norm", lambda: T.layer_norm(a, gamma, beta), [a, gamma, beta]
    yield "conv2d (stride 2)", lambda: T.conv2d(img, k2, stride=2, padding=1), [img, k2]
    yield "conv1d", lambda: T.conv1d(seq, k1, padding=1), [seq, k1]


def run_ops(seed: int = 0, probes: int = PROBES) -> list[GradCheck]:
    rng = np.random.default_rng(seed)
    return [check_gradients(n, fn, lv, probes=probes, seed=seed + i) for i, (n, fn, lv) in enumerate(op_cases(rng))]
