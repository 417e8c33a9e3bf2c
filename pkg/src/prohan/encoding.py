"""Initial representations: profile triplets, the self-attentive text encoder, KG attributes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    embedding_lookup,
    index_,
    masked_softmax,
    matmul,
    mul,
    reshape,
    sum_,
    tanh,
    transpose,
)
from .config import ModelConfig
from .data import CA_TAIL, Subject, Vocabulary, phrase_tokens, rank_options
from .layers import LSTM, ParamStore


@dataclass(frozen=True)
class Triplet:
    first: str
    second: str
    third: str

    def __post_init__(self):
        if not (self.first.strip() and self.second.strip() and self.third.strip()):
            raise ValueError(f"triplet elements must be non-empty: {self}")

    def elements(self) -> tuple[str, str, str]:
        return self.first, self.second, self.third


@dataclass
class TripletIndex:
    """Token ids of all three triplet positions side by side, with averaging weights.

    Row ``r`` lists the tokens of first, second and third element; each token
    carries weight ``1 / len(element)``, padding carries weight 0.
    """

    ids: np.ndarray  # (n, width) int
    weights: np.ndarray  # (n, width, 1)

    @classmethod
    def build(cls, triplets: list[Triplet], vocab: Vocabulary) -> "TripletIndex":
        rows = []
        for t in triplets:
            row = []
            for element in t.elements():
                toks = vocab.ids(phrase_tokens(element)) or [1]
                row.extend((tok, 1.0 / len(toks)) for tok in toks)
            rows.append(row)
        width = max((len(r) for r in rows), default=0)
        ids = np.zeros((len(rows), width), dtype=np.int64)
        weights = np.zeros((len(rows), width, 1))
        for k, row in enumerate(rows):
            ids[k, : len(row)] = [tok for tok, _ in row]
            weights[k, : len(row), 0] = [w for _, w in row]
        return cls(ids, weights)


def embed_triplets(index: TripletIndex, table: Tensor) -> Tensor:
    """Rows of phi(first) + phi(second) + phi(third).

    A multi-token element contributes the mean of its token embeddings.
    """
    return sum_(mul(embedding_lookup(table, index.ids), index.weights), axis=1)


def embed_triplet(t: Triplet, table: Tensor, vocab: Vocabulary) -> Tensor:
    return embed_triplets(TripletIndex.build([t], vocab), table)[0]


def up_triplets(up: dict[str, dict[str, float]]) -> list[list[Triplet]]:
    """<option, order, category> per option, grouped by category in input order."""
    return [[Triplet(opt, order, category) for opt, order in rank_options(options)] for category, options in up.items()]


def ca_triplets(ca: dict[str, str]) -> list[Triplet]:
    return [Triplet(state, category, CA_TAIL) for category, state in ca.items()]


def kg_triplets(kg: list[Subject]) -> list[list[Triplet]]:
    """<entity, attribute, subject> per attribute, grouped by subject."""
    return [[Triplet(a.entity, a.attribute, s.name) for a in s.attributes] for s in kg]


@dataclass
class ProfileEncoding:
    """Member vectors of the three profile sources with their grouping."""

    up: Tensor  # (sum m_i, d_e)
    up_sizes: list[int]
    ca: Tensor  # (N_ca, d_e)
    kg: Tensor  # (sum n_i, text_dim)
    kg_sizes: list[int]
    kg_names: list[str]

    @property
    def n_up(self) -> int:
        return len(self.up_sizes)

    @property
    def n_ca(self) -> int:
        return self.ca.shape[0]

    @property
    def n_kg(self) -> int:
        return len(self.kg_sizes)


def encode_up_ca(up: dict, ca: dict, table: Tensor, vocab: Vocabulary) -> tuple[Tensor, list[int], Tensor]:
    """(P_up, option counts per category, P_ca)."""
    if not up or not ca:
        raise ValueError("user profile and context awareness must each hold at least one category")
    groups = up_triplets(up)
    flat = [t for g in groups for t in g]
    p_up = embed_triplets(TripletIndex.build(flat, vocab), table)
    p_ca = embed_triplets(TripletIndex.build(ca_triplets(ca), vocab), table)
    return p_up, [len(g) for g in groups], p_ca


@dataclass
class TextEncoding:
    tokens: Tensor  # E / U: (T, D) or (B, T, D)
    pooled: Tensor  # g / h: (D,) or (B, D)
    weights: Tensor  # pooling attention, sums to 1 over T


class TextEncoder:
    """BiLSTM and self-attention over word embeddings, concatenated, then MLP-attention pooling."""

    def __init__(self, store: ParamStore, prefix: str, cfg: ModelConfig):
        d_e, H, A = cfg.word_dim, cfg.lstm_hidden, cfg.attn_dim
        self.fwd = LSTM(store, f"{prefix}.lstm_fwd", d_e, H)
        self.bwd = LSTM(store, f"{prefix}.lstm_bwd", d_e, H)
        self.W_q = store.add(f"{prefix}.attn.W_q", (d_e, A))
        self.W_k = store.add(f"{prefix}.attn.W_k", (d_e, A))
        self.W_v = store.add(f"{prefix}.attn.W_v", (d_e, A))
        self.pool_W = store.add(f"{prefix}.pool.W", (cfg.text_dim, cfg.pool_hidden))
        self.pool_b = store.add(f"{prefix}.pool.b", (cfg.pool_hidden,), init="zeros")
        self.pool_v = store.add(f"{prefix}.pool.v", (cfg.pool_hidden,), init="uniform:0.1")
        self.scale = 1.0 / np.sqrt(A)
        self.dim = cfg.text_dim

    def contextualise(self, x: Tensor) -> Tensor:
        """Token matrix E for embedded input ``(B, T, d_e)``."""
        q, k, v = matmul(x, self.W_q), matmul(x, self.W_k), matmul(x, self.W_v)
        attn = masked_softmax(mul(matmul(q, transpose(k)), self.scale))
        return concat([self.fwd.run(x), self.bwd.run(x, reverse=True), matmul(attn, v)], axis=-1)

    def pool_weights(self, E: Tensor) -> Tensor:
        return masked_softmax(matmul(tanh(matmul(E, self.pool_W) + self.pool_b), self.pool_v))

    def pool(self, E: Tensor, weights: Tensor) -> Tensor:
        B, T = weights.shape
        return sum_(mul(E, reshape(weights, (B, T, 1))), axis=1)

    def encode(self, x: Tensor) -> TextEncoding:
        E = self.contextualise(x)
        w = self.pool_weights(E)
        return TextEncoding(E, self.pool(E, w), w)


def sa_encode(token_ids, table: Tensor, encoder: TextEncoder) -> TextEncoding:
    """Encode one token sequence; returns E (T, D), pooled g (D,) and pooling weights (T,)."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("sa_encode needs a non-empty token sequence")
    enc = encoder.encode(embedding_lookup(table, ids[None, :]))
    return TextEncoding(enc.tokens[0], enc.pooled[0], enc.weights[0])


def encode_utterance(token_ids, table: Tensor, encoder: TextEncoder) -> tuple[Tensor, Tensor]:
    """(U, h) for the utterance."""
    enc = sa_encode(token_ids, table, encoder)
    return enc.tokens, enc.pooled


@dataclass
class KgIndex:
    """Unique KG phrases bucketed by length plus per-attribute positions into them."""

    buckets: list[np.ndarray]  # each (B_k, T_k) ids, buckets ordered by length
    entity: np.ndarray
    attribute: np.ndarray
    subject: np.ndarray
    sizes: list[int]
    names: list[str]

    @classmethod
    def build(cls, kg: list[Subject], vocab: Vocabulary) -> "KgIndex":
        if not kg:
            raise ValueError("knowledge graph holds no subjects")
        phrases: dict[tuple[int, ...], None] = {}
        rows = []
        for s in kg:
            if not s.attributes:
                raise ValueError(f"subject {s.name!r} has no attributes")
            for a in s.attributes:
                key = tuple(tuple(vocab.ids(phrase_tokens(x))) or (1,) for x in (a.entity, a.attribute, s.name))
                rows.append(key)
                for p in key:
                    phrases.setdefault(p, None)
        by_len: dict[int, list[tuple[int, ...]]] = {}
        for p in phrases:
            by_len.setdefault(len(p), []).append(p)
        position, buckets = {}, []
        for length in sorted(by_len):
            for p in by_len[length]:
                position[p] = len(position)
            buckets.append(np.array(by_len[length], dtype=np.int64))
        pick = np.array([[position[p] for p in r] for r in rows], dtype=np.int64)
        return cls(buckets, pick[:, 0], pick[:, 1], pick[:, 2], [len(s.attributes) for s in kg], [s.name for s in kg])


def encode_kg_index(index: KgIndex, table: Tensor, encoder: TextEncoder) -> Tensor:
    """Attribute vectors (sum n_i, D): pooled(entity) + pooled(attribute) + pooled(subject)."""
    pooled = [encoder.encode(embedding_lookup(table, ids)).pooled for ids in index.buckets]
    P = pooled[0] if len(pooled) == 1 else concat(pooled, axis=0)
    return (index_(P, index.entity) + index_(P, index.attribute)) + index_(P, index.subject)


def encode_kg(kg: list[Subject], table: Tensor, encoder: TextEncoder, vocab: Vocabulary) -> tuple[Tensor, list[int]]:
    index = KgIndex.build(kg, vocab)
    return encode_kg_index(index, table, encoder), index.sizes
