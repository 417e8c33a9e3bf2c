"""Central finite-difference checks of analytic gradients.

The numeric side only ever runs forward passes, so it stays independent of
the backward rules it checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward

EPS = 1e-5
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """|analytic - numeric| / max(|numeric|, 1e-8) with |.| the Euclidean norm over the tensor."""
    return float(np.linalg.norm(analytic - numeric) / max(float(np.linalg.norm(numeric)), 1e-8))


def entry_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """The same ratio taken entry by entry; a diagnostic, dominated by rounding noise where
    the true gradient is zero."""
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)


def numeric_grad(loss_fn: Callable[[], float], t: Tensor, eps: float = EPS, entries=None) -> np.ndarray:
    """d loss / d t by central differences, perturbing ``t.value`` in place."""
    grad = np.zeros_like(t.value)
    flat, gflat = t.value.reshape(-1), grad.reshape(-1)
    for k in range(flat.size) if entries is None else entries:
        orig = flat[k]
        flat[k] = orig + eps
        plus = loss_fn()
        flat[k] = orig - eps
        minus = loss_fn()
        flat[k] = orig
        gflat[k] = (plus - minus) / (2 * eps)
    return grad


def analytic_grads(build: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.zero_grad()
    with Tape():
        loss = build()
    backward(loss)
    return [p.grad.copy() for p in params]


@dataclass
class CheckResult:
    name: str
    max_rel_error: float  # worst tensor-level relative error
    entries: int
    worst_entry: float = 0.0

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


def check(name: str, build: Callable[[], Tensor], params: Sequence[Tensor], eps: float = EPS) -> CheckResult:
    """Compare backward() against central differences for every entry of ``params``."""
    grads = analytic_grads(build, params)

    def value() -> float:
        return float(build().value)

    worst, entry, count = 0.0, 0.0, 0
    for p, g in zip(params, grads):
        num = numeric_grad(value, p, eps)
        if num.size:
            worst = max(worst, relative_error(g, num))
            entry = max(entry, float(entry_errors(g, num).max()))
        count += num.size
    return CheckResult(name, worst, count, entry)


def _leaf(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def primitive_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    """One scalar-valued probe per differentiable primitive.

    Each output is contracted with a fixed random weight so that every output
    entry influences the loss differently.
    """
    cases = []

    def probe(name, fn, *leaves):
        out_shape = fn().value.shape
        w = rng.normal(size=out_shape)
        cases.append((name, lambda: ad.sum_(ad.mul(fn(), w)), list(leaves)))

    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    probe("matmul", lambda: ad.matmul(a, b), a, b)
    bx, bv = _leaf(rng, 2, 3, 4), _leaf(rng, 4)
    probe("matmul-batched-vector", lambda: ad.matmul(bx, bv), bx, bv)
    p, q = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 4, 3)
    probe("matmul-batched", lambda: ad.matmul(p, q), p, q)
    u, v = _leaf(rng, 3, 4), _leaf(rng, 1, 4)
    probe("add-broadcast", lambda: ad.add(u, v), u, v)
    probe("sub-broadcast", lambda: ad.sub(u, v), u, v)
    probe("mul-broadcast", lambda: ad.mul(u, v), u, v)
    x = _leaf(rng, 3, 5)
    probe("sigmoid", lambda: ad.sigmoid(x), x)
    probe("tanh", lambda: ad.tanh(x), x)
    # keep inputs away from the kink at zero
    y = Tensor(rng.uniform(0.1, 2.0, size=(3, 5)) * rng.choice([-1.0, 1.0], size=(3, 5)), requires_grad=True)
    probe("leaky_relu", lambda: ad.leaky_relu(y, 0.2), y)
    c1, c2 = _leaf(rng, 3, 2), _leaf(rng, 3, 4)
    probe("concat", lambda: ad.concat([c1, c2], axis=-1), c1, c2)
    probe("stack", lambda: ad.stack([c1, c1 * 2.0], axis=0), c1)
    table = _leaf(rng, 6, 3)
    probe("embedding_lookup", lambda: ad.embedding_lookup(table, [4, 1, 4, 0]), table)
    probe("index", lambda: x[1:, ::2], x)
    probe("sum", lambda: ad.sum_(x, axis=0), x)
    probe("mean", lambda: ad.mean(x, axis=1), x)
    probe("reshape", lambda: ad.reshape(x, (5, 3)), x)
    probe("transpose", lambda: ad.transpose(p), p)
    mask = rng.random((3, 5)) < 0.6
    mask[:, 0] = True
    probe("masked_softmax", lambda: ad.masked_softmax(x, mask), x)
    xw, h0, c0, W_h = _leaf(rng, 2, 12), _leaf(rng, 2, 3), _leaf(rng, 2, 3), _leaf(rng, 3, 12)
    probe("lstm_cell", lambda: ad.lstm_cell(xw, h0, c0, W_h), xw, h0, c0, W_h)
    probe("lstm_cell-initial", lambda: ad.lstm_cell(xw, None, None, W_h), xw)
    seq = _leaf(rng, 2, 4, 12)
    probe("lstm_sequence", lambda: ad.lstm_sequence(seq, W_h), seq, W_h)
    probe("lstm_sequence-reverse", lambda: ad.lstm_sequence(seq, W_h, reverse=True), seq, W_h)
    logits, rows = _leaf(rng, 5), _leaf(rng, 4, 5)
    gold = rng.integers(0, 5, size=4)
    cases.append(("cross_entropy", lambda: ad.cross_entropy(logits, 2), [logits]))
    cases.append(("cross_entropy-rows", lambda: ad.cross_entropy(rows, gold), [rows]))
    return cases


def check_primitives(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(name, build, params) for name, build, params in primitive_cases(rng)]


def micro_model(seed: int):
    """A 1-sample model small enough to finite-difference every parameter."""
    from .config import ModelConfig
    from .data import Attribute, Corpus, Sample, Subject
    from .model import ProHAN

    sample = Sample(
        tokens=["play", "jazz", "on", "tv"],
        intent="PlayMusic",
        slots=["O", "B-musicName", "O", "B-deviceType"],
        kg=[Subject("jazz", (Attribute("type", "song"),)), Subject("tv", (Attribute("type", "device"),))],
        up={"multimedia": {"music": 0.7, "video": 0.3}},
        ca={"movement state": "walking"},
    )
    # a second intent keeps the intent loss informative
    other = Sample(["go", "home"], "Navigate", ["O", "O"], sample.kg, sample.up, sample.ca)
    corpus = Corpus([sample], [other])
    cfg = ModelConfig(word_dim=4, lstm_hidden=2, attn_dim=2, pool_hidden=2, graph_dim=4, layers=1,
                      slot_hidden=2, label_dim=2)
    model = ProHAN.for_corpus(corpus, cfg, seed=seed)
    # spread parameter scales so no gradient is vanishingly small
    rng = np.random.default_rng(seed + 1000)
    model.params.flat[:] = rng.normal(0.0, 0.5, size=model.params.flat.shape)
    return model, model.prepare(sample)


def check_model(seed: int, mode: str = "none") -> list[CheckResult]:
    model, prep = micro_model(seed)

    def build() -> Tensor:
        return model.forward(prep, mode, teacher_forcing=True).loss

    results = []
    params = list(model.params)
    grads = analytic_grads(build, params)

    def value() -> float:
        return float(build().value)

    for (name, p), g in zip(model.params.items(), grads):
        num = numeric_grad(value, p)
        results.append(CheckResult(name, relative_error(g, num), num.size, float(entry_errors(g, num).max())))
    return results
