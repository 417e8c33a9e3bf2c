"""Intent head and the intent-guided unidirectional LSTM slot decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, argmax, concat, embedding_lookup, masked_softmax, matmul, stack
from .config import ModelConfig
from .layers import LSTM, ParamStore


class IntentHead:
    """softmax(W_I [h ; h_u]) with ``W_I`` stored ``(d_u + d_g, num_intents)``."""

    def __init__(self, store: ParamStore, cfg: ModelConfig, num_intents: int):
        self.W = store.add("decoder.W_I", (cfg.text_dim + cfg.graph_dim, num_intents))

    def logits(self, h: Tensor, h_u: Tensor) -> Tensor:
        return matmul(concat([h, h_u]), self.W)


def predict_intent(h: Tensor, h_u: Tensor, head: IntentHead) -> tuple[Tensor, int]:
    """(intent distribution, argmax with ties to the lowest index)."""
    if h.shape[-1] + h_u.shape[-1] != head.W.shape[0]:
        raise ValueError(f"intent head expects {head.W.shape[0]} inputs, got {h.shape[-1]} + {h_u.shape[-1]}")
    logits = head.logits(h, h_u)
    return masked_softmax(logits), int(argmax(logits))


@dataclass
class SlotOutput:
    logits: Tensor  # (m, num_tags)
    tags: list[int]

    @property
    def probs(self) -> np.ndarray:
        v = self.logits.value
        e = np.exp(v - v.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


class SlotDecoder:
    """LSTM whose step input is u_t ; phi_slot(prev tag) ; phi_int(intent) ; h_u."""

    def __init__(self, store: ParamStore, cfg: ModelConfig, num_intents: int, num_tags: int):
        self.num_tags = num_tags
        self.sos = num_tags  # extra embedding row used as the tag before step 0
        self.slot_emb = store.add("decoder.slot_embedding", (num_tags + 1, cfg.label_dim), init="normal")
        self.intent_emb = store.add("decoder.intent_embedding", (num_intents, cfg.label_dim), init="normal")
        in_dim = cfg.text_dim + 2 * cfg.label_dim + cfg.graph_dim
        self.lstm = LSTM(store, "decoder.slot_lstm", in_dim, cfg.slot_hidden)
        self.W = store.add("decoder.W_S", (cfg.slot_hidden, num_tags))

    def _guide(self, intent: int, h_u: Tensor) -> Tensor:
        return concat([embedding_lookup(self.intent_emb, intent), h_u])

    def teacher_forced(self, U: Tensor, intent: int, h_u: Tensor, gold: list[int]) -> SlotOutput:
        m = U.shape[0]
        prev = [self.sos] + list(gold[:-1])
        guide = add(np.zeros((m, 1)), self._guide(intent, h_u))
        x = concat([U, embedding_lookup(self.slot_emb, prev), guide], axis=-1)
        hidden = self.lstm.run(x)
        logits = matmul(hidden, self.W)
        return SlotOutput(logits, [int(t) for t in argmax(logits)])

    def greedy(self, U: Tensor, intent: int, h_u: Tensor) -> SlotOutput:
        guide = self._guide(intent, h_u)
        prev, state = self.sos, None
        rows, tags = [], []
        for t in range(U.shape[0]):
            x = concat([U[t], embedding_lookup(self.slot_emb, prev), guide])
            state = self.lstm.step(self.lstm.project(x), state)
            logit = matmul(state[0], self.W)
            prev = int(argmax(logit))
            rows.append(logit)
            tags.append(prev)
        return SlotOutput(stack(rows), tags)


def decode_slots(U: Tensor, intent: int, h_u: Tensor, decoder: SlotDecoder, mode: str = "greedy",
                 gold: list[int] | None = None) -> SlotOutput:
    if U.shape[0] == 0:
        raise ValueError("cannot decode an empty utterance")
    if mode == "teacher-forcing":
        if gold is None or len(gold) != U.shape[0]:
            raise ValueError("teacher forcing needs one gold tag per token")
        return decoder.teacher_forced(U, intent, h_u, gold)
    if mode == "greedy":
        return decoder.greedy(U, intent, h_u)
    raise ValueError(f"unknown decoding mode {mode!r}")
