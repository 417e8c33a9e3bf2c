"""Reference implementations that share no code with the package.

Everything here is written with explicit loops over plain numpy / Python
values so that it can serve as an independent check.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# -- graph attention -----------------------------------------------------------------

def leaky(x: float, slope: float) -> float:
    return x if x > 0 else slope * x


def gat_layer_loops(H, edges, W_left, W_right, a, f, slope=0.2):
    """One relation-typed GATv2 layer, one destination node at a time.

    ``edges`` are ``(src, dst, relation)``.  Scores are normalised over every
    incoming edge of the destination; messages of relation ``r`` pass through
    ``f[r]``.
    """
    N, d = H.shape
    out = np.zeros((N, f[0].shape[1]))
    alpha = np.zeros((N, N))
    for i in range(N):
        incoming = [(s, r) for s, dst, r in edges if dst == i]
        if not incoming:
            continue
        scores = []
        for j, _ in incoming:
            total = 0.0
            for k in range(d):
                z = sum(H[i, p] * W_left[p, k] for p in range(d)) + sum(H[j, p] * W_right[p, k] for p in range(d))
                total += a[k] * leaky(z, slope)
            scores.append(total)
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        norm = sum(weights)
        for (j, r), w in zip(incoming, weights):
            alpha[i, j] = w / norm
        for r in sorted({r for _, r in incoming}):
            inner = np.zeros(d)
            for j, rr in incoming:
                if rr == r:
                    inner += alpha[i, j] * np.array([sum(H[j, p] * W_right[p, k] for p in range(d)) for k in range(d)])
            out[i] += inner @ f[r]
    return out, alpha


# -- BIO spans ---------------------------------------------------------------------------

def spans_brute_force(tags):
    """Every (type, start, end) chunk, found by testing each candidate interval.

    A chunk of type X covers [s, e] when tags[s] opens it (B-X, or an I-X that
    does not continue an X chunk), every tag inside is I-X, and tags[e + 1] is
    not I-X.
    """
    n = len(tags)
    found = set()
    types = {t[2:] for t in tags if t != "O"}
    for x in types:
        for s in range(n):
            prev = tags[s - 1] if s > 0 else "O"
            opens = tags[s] == f"B-{x}" or (tags[s] == f"I-{x}" and prev not in (f"B-{x}", f"I-{x}"))
            if not opens:
                continue
            for e in range(s, n):
                if any(tags[k] != f"I-{x}" for k in range(s + 1, e + 1)):
                    break
                nxt = tags[e + 1] if e + 1 < n else "O"
                if nxt != f"I-{x}":
                    found.add((x, s, e))
    return found


def f1_exact(gold_seqs, pred_seqs) -> float:
    tp = fp = fn = 0
    for g, p in zip(gold_seqs, pred_seqs):
        gs, ps = spans_brute_force(g), spans_brute_force(p)
        tp += len(gs & ps)
        fp += len(ps - gs)
        fn += len(gs - ps)
    if tp + fp + fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision, recall = Fraction(tp, tp + fp), Fraction(tp, tp + fn)
    return float(2 * precision * recall / (precision + recall))


def accuracy_exact(hits: list[bool]) -> float:
    return float(Fraction(sum(hits), len(hits))) if hits else 0.0


# -- recurrent cell ------------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_unrolled(xs, W_x, W_h, b):
    """Hidden states of an LSTM (gate order i, f, o, g) with explicit gate arithmetic."""
    H = W_h.shape[0]
    h, c = np.zeros(H), np.zeros(H)
    outs = []
    for x in xs:
        z = x @ W_x + h @ W_h + b
        i, f, o, g = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[2 * H:3 * H]), np.tanh(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        outs.append(h)
    return np.array(outs)
