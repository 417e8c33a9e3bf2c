"""Full model: encoders, heterogeneous graph, decoders, and checkpoint I/O."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, argmax, cross_entropy, reshape
from .config import ModelConfig
from .data import Corpus, LabelSet, Sample, Vocabulary
from .decoder import IntentHead, SlotDecoder, SlotOutput
from .encoding import (
    KgIndex,
    ProfileEncoding,
    TextEncoder,
    TripletIndex,
    ca_triplets,
    embed_triplets,
    encode_kg_index,
    encode_utterance,
    up_triplets,
)
from .graph import HeteroGAT, HeteroGraph, NodeStates, ablate, build_topology, global_features
from .layers import ParamStore

CHECKPOINT_FORMAT = "prohan-checkpoint/1"


@dataclass
class Prepared:
    """Everything about a sample that does not depend on parameters."""

    sample: Sample
    utterance: np.ndarray
    up: TripletIndex
    up_sizes: list[int]
    ca: TripletIndex
    kg: KgIndex
    topology: HeteroGraph
    intent: int | None
    slots: list[int] | None
    _graphs: dict[str, HeteroGraph] = field(default_factory=dict, repr=False)

    def graph(self, mode: str) -> HeteroGraph:
        if mode not in self._graphs:
            self._graphs[mode] = self.topology if mode == "none" else ablate(self.topology, mode)
        return self._graphs[mode]


@dataclass
class Output:
    intent_logits: Tensor
    intent: int
    slots: SlotOutput
    states: NodeStates
    h: Tensor
    loss: Tensor | None = None

    @property
    def h_u(self) -> Tensor:
        return self.states.h_u


class ProHAN:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, intents: LabelSet, slot_tags: LabelSet, seed: int = 0):
        self.cfg = cfg
        self.vocab, self.intents, self.slot_tags = vocab, intents, slot_tags
        self.params = ParamStore(np.random.default_rng(seed))
        self.word_emb = self.params.add("encoder.word_embedding", (len(vocab), cfg.word_dim), init="normal")
        self.utt_encoder = TextEncoder(self.params, "encoder.utterance", cfg)
        self.kg_encoder = TextEncoder(self.params, "encoder.kg", cfg)
        self.gat = HeteroGAT(self.params, cfg)
        self.intent_head = IntentHead(self.params, cfg, len(intents))
        self.slot_decoder = SlotDecoder(self.params, cfg, len(intents), len(slot_tags))
        self.params.freeze()

    @classmethod
    def for_corpus(cls, corpus: Corpus, cfg: ModelConfig, seed: int = 0) -> "ProHAN":
        return cls(cfg, corpus.vocab, corpus.intents, corpus.slot_tags, seed)

    def prepare(self, sample: Sample, with_gold: bool = True) -> Prepared:
        groups = up_triplets(sample.up)
        kg = KgIndex.build(sample.kg, self.vocab)
        topology = build_topology(kg.names, kg.sizes, list(sample.up), [len(g) for g in groups], list(sample.ca))
        return Prepared(
            sample=sample,
            utterance=np.array(self.vocab.ids(sample.tokens), dtype=np.int64),
            up=TripletIndex.build([t for g in groups for t in g], self.vocab),
            up_sizes=[len(g) for g in groups],
            ca=TripletIndex.build(ca_triplets(sample.ca), self.vocab),
            kg=kg,
            topology=topology,
            intent=self.intents.id(sample.intent) if with_gold else None,
            slots=self.slot_tags.ids(sample.slots) if with_gold else None,
        )

    def profile(self, prep: Prepared) -> ProfileEncoding:
        table = self.word_emb
        return ProfileEncoding(
            up=embed_triplets(prep.up, table),
            up_sizes=prep.up_sizes,
            ca=embed_triplets(prep.ca, table),
            kg=encode_kg_index(prep.kg, table, self.kg_encoder),
            kg_sizes=prep.kg.sizes,
            kg_names=prep.kg.names,
        )

    def graph(self, prep: Prepared, h: Tensor, mode: str = "none") -> HeteroGraph:
        feats = global_features(self.profile(prep))
        feats["utterance"] = reshape(h, (1, h.shape[-1]))
        return replace(prep.graph(mode), features=feats)

    def forward(self, prep: Prepared, mode: str = "none", teacher_forcing: bool = False) -> Output:
        """One sample end to end.  With teacher forcing the joint loss is attached."""
        U, h = encode_utterance(prep.utterance, self.word_emb, self.utt_encoder)
        states = self.gat.propagate(self.graph(prep, h, mode))
        h_u = states.h_u
        intent_logits = self.intent_head.logits(h, h_u)
        predicted = int(argmax(intent_logits))
        if teacher_forcing:
            if prep.intent is None:
                raise ValueError("teacher forcing needs gold labels")
            feed = prep.intent if self.cfg.intent_feed == "gold" else predicted
            slots = self.slot_decoder.teacher_forced(U, feed, h_u, prep.slots)
            loss = cross_entropy(intent_logits, prep.intent) + cross_entropy(slots.logits, prep.slots)
            return Output(intent_logits, predicted, slots, states, h, loss)
        slots = self.slot_decoder.greedy(U, predicted, h_u)
        return Output(intent_logits, predicted, slots, states, h)

    def predict(self, prep: Prepared, mode: str = "none") -> tuple[str, list[str]]:
        out = self.forward(prep, mode)
        return self.intents.labels[out.intent], [self.slot_tags.labels[t] for t in out.slots.tags]

    # -- checkpoints -------------------------------------------------------------------

    def checkpoint(self, extra: dict | None = None) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "model": asdict(self.cfg),
            "vocab": self.vocab.to_list(),
            "intents": list(self.intents.labels),
            "slot_tags": list(self.slot_tags.labels),
            "extra": extra or {},
            "parameters": self.params.state(),
        }

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.checkpoint(extra)), encoding="utf-8")

    @classmethod
    def from_checkpoint(cls, data: dict) -> "ProHAN":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {data.get('format')!r}")
        model = cls(ModelConfig(**data["model"]), Vocabulary.from_list(data["vocab"]),
                    LabelSet(data["intents"]), LabelSet(data["slot_tags"]))
        model.params.load_state(data["parameters"])
        return model

    @classmethod
    def load(cls, path: str | Path) -> "ProHAN":
        return cls.from_checkpoint(json.loads(Path(path).read_text(encoding="utf-8")))
