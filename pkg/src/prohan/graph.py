"""Per-sample heterogeneous profile graph and relation-typed GATv2 aggregation."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .autodiff import Tensor, concat, index_, leaky_relu, masked_softmax, matmul, mul, reshape, sum_
from .config import ABLATIONS, ModelConfig
from .encoding import ProfileEncoding
from .layers import ParamStore


class NodeKind(enum.Enum):
    UTTERANCE = "utterance"
    KG_ATTRIBUTE = "kg_attribute"
    KG_GLOBAL = "kg_global"
    UP_OPTION = "up_option"
    UP_GLOBAL = "up_global"
    CA_STATE = "ca_state"


class EdgeKind(enum.IntEnum):
    INTRA_PRO = 0
    INTER_PRO = 1
    UTTERANCE_PRO = 2


# input-transform class of each node kind
NODE_CLASS = {
    NodeKind.UTTERANCE: "utterance",
    NodeKind.KG_ATTRIBUTE: "kg",
    NodeKind.KG_GLOBAL: "kg",
    NodeKind.UP_OPTION: "up",
    NodeKind.UP_GLOBAL: "up",
    NodeKind.CA_STATE: "ca",
}
CLASSES = ("utterance", "kg", "up", "ca")
RELATION_NAMES = ("f_intra", "f_inter", "f_utterance")


class GraphConfigError(ValueError):
    """The profile content cannot form a valid graph."""


@dataclass
class HeteroGraph:
    """Nodes in fixed block order: utterance, KG attributes, KG globals, UP options, UP globals, CA states.

    ``edges`` holds directed ``(src, dst, kind)``; node ``dst`` aggregates from ``src``.
    ``features`` maps each node class to the stacked initial vectors of that block.
    """

    kinds: list[NodeKind]
    labels: list[str]
    edges: list[tuple[int, int, EdgeKind]]
    features: dict[str, Tensor] | None = None
    _dense: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.kinds)

    def neighbors(self, i: int, kind: EdgeKind | None = None) -> list[int]:
        return [s for s, d, k in self.edges if d == i and (kind is None or k == kind)]

    def neighbor_index(self) -> dict[tuple[int, EdgeKind], list[int]]:
        index: dict[tuple[int, EdgeKind], list[int]] = {}
        for s, d, k in self.edges:
            index.setdefault((d, k), []).append(s)
        return index

    def degree(self, i: int) -> int:
        return sum(1 for s, d, _ in self.edges if d == i or s == i)

    def edge_counts(self) -> dict[str, int]:
        counts = {k.name: 0 for k in EdgeKind}
        for _, _, k in self.edges:
            counts[k.name] += 1
        return counts

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(mask, gather): mask[i, j] marks edge j->i; gather[i, j] = relation * N + j."""
        if self._dense is None:
            N = self.num_nodes
            rel = np.zeros((N, N), dtype=np.int64)
            mask = np.zeros((N, N), dtype=bool)
            for s, d, k in self.edges:
                if mask[d, s]:
                    raise GraphConfigError(f"duplicate edge {s}->{d}")
                mask[d, s] = True
                rel[d, s] = int(k)
            self._dense = (mask, rel * N + np.arange(N)[None, :])
        return self._dense

    def to_json(self) -> str:
        doc = {
            "nodes": [{"id": i, "kind": k.value, "label": l} for i, (k, l) in enumerate(zip(self.kinds, self.labels))],
            "edges": [{"src": s, "dst": d, "kind": k.name} for s, d, k in self.edges],
        }
        return json.dumps(doc, ensure_ascii=False, indent=1)


def build_topology(
    kg_names: list[str], kg_sizes: list[int], up_names: list[str], up_sizes: list[int], ca_names: list[str]
) -> HeteroGraph:
    """Nodes and the three edge relations; every connection becomes two directed edges."""
    if not kg_sizes or not up_sizes or not ca_names:
        raise GraphConfigError("KG, UP and CA must each contribute at least one global node")
    if any(n < 1 for n in kg_sizes) or any(m < 1 for m in up_sizes):
        raise GraphConfigError("every KG subject and UP category needs at least one member")
    kinds, labels = [NodeKind.UTTERANCE], ["utterance"]

    def add(kind: NodeKind, label: str) -> int:
        kinds.append(kind)
        labels.append(label)
        return len(kinds) - 1

    kg_members = [[add(NodeKind.KG_ATTRIBUTE, f"{name}#{k}") for k in range(n)] for name, n in zip(kg_names, kg_sizes)]
    kg_globals = [add(NodeKind.KG_GLOBAL, name) for name in kg_names]
    up_members = [[add(NodeKind.UP_OPTION, f"{name}#{k}") for k in range(m)] for name, m in zip(up_names, up_sizes)]
    up_globals = [add(NodeKind.UP_GLOBAL, name) for name in up_names]
    ca_nodes = [add(NodeKind.CA_STATE, name) for name in ca_names]

    edges: list[tuple[int, int, EdgeKind]] = []

    def link(a: int, b: int, kind: EdgeKind) -> None:
        edges.append((a, b, kind))
        edges.append((b, a, kind))

    intra, inter = EdgeKind.INTRA_PRO, EdgeKind.INTER_PRO
    for members, g in zip(kg_members + up_members, kg_globals + up_globals):
        for m in members:
            link(m, g, intra)
    for (a, na), (b, nb) in combinations(zip(kg_globals, kg_names), 2):
        if na != nb:  # homonymous subjects stay apart
            link(a, b, intra)
    for a, b in combinations(up_globals, 2):
        link(a, b, intra)
    for a, b in combinations(ca_nodes, 2):
        link(a, b, intra)
    for group_a, group_b in ((kg_globals, up_globals), (kg_globals, ca_nodes), (up_globals, ca_nodes)):
        for a in group_a:
            for b in group_b:
                link(a, b, inter)
    for g in kg_globals + up_globals + ca_nodes:
        link(0, g, EdgeKind.UTTERANCE_PRO)
    return HeteroGraph(kinds, labels, edges)


def _group_mean(members: Tensor, sizes: list[int]) -> Tensor:
    avg = np.zeros((len(sizes), sum(sizes)))
    start = 0
    for row, n in enumerate(sizes):
        avg[row, start:start + n] = 1.0 / n
        start += n
    return matmul(avg, members)


def global_features(profile: ProfileEncoding) -> dict[str, Tensor]:
    """Stacked initial vectors per node class.

    Global nodes of KG subjects and UP categories start from the mean of their members.
    """
    return {
        "kg": concat([profile.kg, _group_mean(profile.kg, profile.kg_sizes)], axis=0),
        "up": concat([profile.up, _group_mean(profile.up, profile.up_sizes)], axis=0),
        "ca": profile.ca,
    }


def build_graph(h: Tensor, profile: ProfileEncoding, up_names: list[str] | None = None,
                ca_names: list[str] | None = None) -> HeteroGraph:
    up_names = up_names or [f"up{k}" for k in range(profile.n_up)]
    ca_names = ca_names or [f"ca{k}" for k in range(profile.n_ca)]
    graph = build_topology(profile.kg_names, profile.kg_sizes, up_names, profile.up_sizes, ca_names)
    feats = global_features(profile)
    feats["utterance"] = reshape(h, (1, h.shape[-1]))
    graph.features = feats
    return graph


def ablate(graph: HeteroGraph, mode: str) -> HeteroGraph:
    """Remove one relation, or collapse all relations into one (``homogeneous``)."""
    if mode not in ABLATIONS:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATIONS}")
    drop = {"drop-intra": EdgeKind.INTRA_PRO, "drop-inter": EdgeKind.INTER_PRO,
            "drop-utterance": EdgeKind.UTTERANCE_PRO}.get(mode)
    if mode == "none":
        edges = list(graph.edges)
    elif mode == "homogeneous":
        edges = [(s, d, EdgeKind.INTRA_PRO) for s, d, _ in graph.edges]
    else:
        edges = [e for e in graph.edges if e[2] != drop]
    return replace(graph, edges=edges, _dense=None)


@dataclass
class NodeStates:
    H: list[Tensor]  # H[0] after node transforms, H[l] after layer l
    alpha: list[Tensor]  # (N, N) attention per layer, alpha[i, j] for edge j->i

    @property
    def h_u(self) -> Tensor:
        return self.H[-1][0]


class HeteroGAT:
    """Node-kind input transforms followed by L relation-typed GATv2 layers."""

    def __init__(self, store: ParamStore, cfg: ModelConfig, prefix: str = "graph"):
        d = cfg.graph_dim
        in_dims = {"utterance": cfg.text_dim, "kg": cfg.text_dim, "up": cfg.word_dim, "ca": cfg.word_dim}
        self.node = {c: store.add(f"{prefix}.node_{c}", (in_dims[c], d)) for c in CLASSES}
        self.layers = []
        for l in range(cfg.layers):
            self.layers.append({
                "W_left": store.add(f"{prefix}.W_left.layer{l}", (d, d)),
                "W_right": store.add(f"{prefix}.W_right.layer{l}", (d, d)),
                "a": store.add(f"{prefix}.a.layer{l}", (d,), init=f"uniform:{1.0 / np.sqrt(d)}"),
                "f": [store.add(f"{prefix}.{name}.layer{l}", (d, d)) for name in RELATION_NAMES],
            })
        self.slope = cfg.leaky_slope

    def apply_node_transforms(self, graph: HeteroGraph) -> Tensor:
        feats = graph.features
        blocks = [matmul(feats[c], self.node[c]) for c in CLASSES]
        return concat(blocks, axis=0)

    def layer(self, H: Tensor, graph: HeteroGraph, params: dict) -> tuple[Tensor, Tensor]:
        mask, gather = graph.dense()
        N, d = H.shape
        left = matmul(H, params["W_left"])
        right = matmul(H, params["W_right"])
        # pair[i, j] = W_left h_i + W_right h_j
        pair = reshape(left, (N, 1, d)) + reshape(right, (1, N, d))
        scores = matmul(leaky_relu(pair, self.slope), params["a"])
        alpha = masked_softmax(scores, mask, empty="zero")
        messages = concat([matmul(right, f) for f in params["f"]], axis=0)
        picked = index_(messages, gather)
        out = sum_(mul(reshape(alpha, (N, N, 1)), picked), axis=1)
        return out, alpha

    def propagate(self, graph: HeteroGraph, layers: int | None = None) -> NodeStates:
        L = len(self.layers) if layers is None else layers
        if not 1 <= L <= len(self.layers):
            raise ValueError(f"layers must be in [1, {len(self.layers)}]")
        H = [self.apply_node_transforms(graph)]
        alphas = []
        for params in self.layers[:L]:
            nxt, alpha = self.layer(H[-1], graph, params)
            H.append(nxt)
            alphas.append(alpha)
        return NodeStates(H, alphas)
