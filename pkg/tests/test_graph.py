from __future__ import annotations

import json
from collections import deque
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prohan.autodiff import Tensor
from prohan.config import ModelConfig
from prohan.encoding import ProfileEncoding
from prohan.graph import (
    EdgeKind,
    GraphConfigError,
    HeteroGAT,
    HeteroGraph,
    NodeKind,
    ablate,
    build_graph,
    build_topology,
)
from prohan.layers import ParamStore

from oracles import gat_layer_loops

INTRA, INTER, UTT = EdgeKind.INTRA_PRO, EdgeKind.INTER_PRO, EdgeKind.UTTERANCE_PRO


def fixture_graph() -> HeteroGraph:
    # KG: 2 subjects with 3 and 2 attributes; UP: 2 categories with 3 and 2 options; CA: 2 states
    return build_topology(["jazz", "tv"], [3, 2], ["multimedia", "transit"], [3, 2], ["movement", "weather"])


def expected_counts(kg_names, kg_sizes, up_sizes, n_ca) -> dict[str, int]:
    kg_pairs = sum(1 for a, b in combinations(kg_names, 2) if a != b)
    n_kg, n_up = len(kg_sizes), len(up_sizes)
    intra = sum(kg_sizes) + sum(up_sizes) + kg_pairs + n_up * (n_up - 1) // 2 + n_ca * (n_ca - 1) // 2
    inter = n_kg * n_up + n_kg * n_ca + n_up * n_ca
    utt = n_kg + n_up + n_ca
    return {"INTRA_PRO": 2 * intra, "INTER_PRO": 2 * inter, "UTTERANCE_PRO": 2 * utt}


# -- construction ---------------------------------------------------------------------

def test_fixture_has_17_nodes_and_62_directed_edges():
    g = fixture_graph()
    assert g.num_nodes == 17
    assert len(g.edges) == 62
    # 10 member-global + 1 KG pair + 1 UP pair + 1 CA pair, 12 inter-PRO, 6 utterance-PRO connections
    assert g.edge_counts() == {"INTRA_PRO": 26, "INTER_PRO": 24, "UTTERANCE_PRO": 12}
    kinds = [k for k in g.kinds]
    assert kinds[0] == NodeKind.UTTERANCE
    assert kinds.count(NodeKind.KG_ATTRIBUTE) == 5 and kinds.count(NodeKind.KG_GLOBAL) == 2
    assert kinds.count(NodeKind.UP_OPTION) == 5 and kinds.count(NodeKind.UP_GLOBAL) == 2
    assert kinds.count(NodeKind.CA_STATE) == 2


@pytest.mark.parametrize("mode, total, counts", [
    ("none", 62, {"INTRA_PRO": 26, "INTER_PRO": 24, "UTTERANCE_PRO": 12}),
    ("drop-intra", 36, {"INTRA_PRO": 0, "INTER_PRO": 24, "UTTERANCE_PRO": 12}),
    ("drop-inter", 38, {"INTRA_PRO": 26, "INTER_PRO": 0, "UTTERANCE_PRO": 12}),
    ("drop-utterance", 50, {"INTRA_PRO": 26, "INTER_PRO": 24, "UTTERANCE_PRO": 0}),
    ("homogeneous", 62, {"INTRA_PRO": 62, "INTER_PRO": 0, "UTTERANCE_PRO": 0}),
])
def test_fixture_ablation_counts(mode, total, counts):
    g = ablate(fixture_graph(), mode)
    assert len(g.edges) == total
    assert g.edge_counts() == counts
    assert g.num_nodes == 17


def test_drop_utterance_isolates_the_utterance_node():
    assert ablate(fixture_graph(), "drop-utterance").degree(0) == 0


def test_unknown_ablation_mode():
    with pytest.raises(ValueError):
        ablate(fixture_graph(), "drop-everything")


def test_same_name_subjects_have_no_intra_edge():
    g = build_topology(["jazz", "jazz"], [1, 1], ["multimedia"], [1], ["movement"])
    globals_ = [i for i, k in enumerate(g.kinds) if k == NodeKind.KG_GLOBAL]
    assert not any(s in globals_ and d in globals_ for s, d, _ in g.edges)


def test_degenerate_profile_stays_connected():
    g = build_topology(["jazz"], [1], ["multimedia"], [1], ["movement"])
    globals_ = {i for i, k in enumerate(g.kinds) if k in (NodeKind.KG_GLOBAL, NodeKind.UP_GLOBAL, NodeKind.CA_STATE)}
    assert not [e for e in g.edges if e[2] == INTRA and e[0] in globals_ and e[1] in globals_]
    seen, todo = {0}, deque([0])
    while todo:
        i = todo.popleft()
        for j in g.neighbors(i):
            if j not in seen:
                seen.add(j)
                todo.append(j)
    assert seen == set(range(g.num_nodes))


def test_empty_pro_is_a_configuration_error():
    with pytest.raises(GraphConfigError):
        build_topology([], [], ["multimedia"], [1], ["movement"])
    with pytest.raises(GraphConfigError):
        build_topology(["jazz"], [1], ["multimedia"], [1], [])


def test_structural_invariants():
    g = fixture_graph()
    edge_set = {(s, d) for s, d, _ in g.edges}
    assert all((d, s) in edge_set for s, d in edge_set)
    assert all(s != d for s, d in edge_set)
    assert len(edge_set) == len(g.edges)
    for i, kind in enumerate(g.kinds):
        owner = {NodeKind.KG_ATTRIBUTE: NodeKind.KG_GLOBAL, NodeKind.UP_OPTION: NodeKind.UP_GLOBAL}.get(kind)
        if owner:
            targets = [d for s, d, k in g.edges if s == i and k == INTRA and g.kinds[d] == owner]
            assert len(targets) == 1
    index = g.neighbor_index()
    for (i, k), srcs in index.items():
        assert sorted(srcs) == sorted(g.neighbors(i, k))
    assert sum(len(v) for v in index.values()) == len(g.edges)


def test_construction_is_pure_and_dumps_json():
    a, b = fixture_graph(), fixture_graph()
    assert a.kinds == b.kinds and a.edges == b.edges
    doc = json.loads(a.to_json())
    assert len(doc["nodes"]) == 17 and len(doc["edges"]) == 62
    assert doc["edges"][0].keys() == {"src", "dst", "kind"}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=4),
       st.lists(st.integers(1, 4), min_size=4, max_size=4),
       st.lists(st.integers(1, 4), min_size=1, max_size=3),
       st.integers(1, 3))
def test_edge_counts_match_closed_form(kg_names, kg_sizes, up_sizes, n_ca):
    kg_sizes = kg_sizes[: len(kg_names)]
    g = build_topology(kg_names, kg_sizes, [f"u{k}" for k in range(len(up_sizes))], up_sizes,
                       [f"c{k}" for k in range(n_ca)])
    assert g.edge_counts() == expected_counts(kg_names, kg_sizes, up_sizes, n_ca)
    assert g.num_nodes == 1 + sum(kg_sizes) + len(kg_sizes) + sum(up_sizes) + len(up_sizes) + n_ca


# -- propagation ---------------------------------------------------------------------------

def make_gat(d=4, layers=1, seed=0, text_dim=None) -> tuple[HeteroGAT, ModelConfig]:
    cfg = ModelConfig(word_dim=3, lstm_hidden=2, attn_dim=1, graph_dim=d, layers=layers)
    gat = HeteroGAT(ParamStore(np.random.default_rng(seed)), cfg)
    return gat, cfg


def random_features(g: HeteroGraph, cfg: ModelConfig, rng) -> dict[str, Tensor]:
    n = {c: 0 for c in ("utterance", "kg", "up", "ca")}
    for k in g.kinds:
        n[{"utterance": "utterance", "kg_attribute": "kg", "kg_global": "kg", "up_option": "up",
           "up_global": "up", "ca_state": "ca"}[k.value]] += 1
    dims = {"utterance": cfg.text_dim, "kg": cfg.text_dim, "up": cfg.word_dim, "ca": cfg.word_dim}
    return {c: Tensor(rng.normal(size=(n[c], dims[c]))) for c in n}


def test_node_transforms_identity_zero_and_random():
    gat, cfg = make_gat(d=5)
    g = fixture_graph()
    rng = np.random.default_rng(2)
    feats = random_features(g, cfg, rng)
    g.features = feats
    stacked = [feats[c].value for c in ("utterance", "kg", "up", "ca")]
    for c in ("utterance", "kg"):
        gat.node[c].value[...] = np.eye(5)
    for c in ("up", "ca"):
        gat.node[c].value[...] = np.eye(3, 5)
    padded = np.vstack([np.pad(x, ((0, 0), (0, 5 - x.shape[1]))) for x in stacked])
    np.testing.assert_array_equal(gat.apply_node_transforms(g).value, padded)
    for c in gat.node:
        gat.node[c].value[...] = 0.0
    assert not gat.apply_node_transforms(g).value.any()
    for c in gat.node:
        gat.node[c].value[...] = rng.normal(size=gat.node[c].shape)
    H = gat.apply_node_transforms(g).value
    row = 0
    for c, x in zip(("utterance", "kg", "up", "ca"), stacked):
        for v in x:
            np.testing.assert_allclose(H[row], v @ gat.node[c].value, atol=1e-14)
            row += 1


def test_singleton_attention_copies_the_neighbour():
    gat, _ = make_gat(d=3)
    params = gat.layers[0]
    params["W_right"].value[...] = np.eye(3)
    params["f"][INTER].value[...] = np.eye(3)
    g = HeteroGraph([NodeKind.UTTERANCE] * 2, ["x", "y"], [(1, 0, INTER)])
    H = np.array([[0.3, -1.0, 2.0], [1.5, 0.25, -0.75]])
    out, alpha = gat.layer(Tensor(H), g, params)
    assert alpha.value[0, 1] == 1.0
    np.testing.assert_array_equal(out.value[0], H[1])


def test_identical_neighbours_share_attention():
    gat, _ = make_gat(d=3, seed=4)
    params = gat.layers[0]
    g = HeteroGraph([NodeKind.UTTERANCE] * 3, list("xyz"), [(1, 0, INTRA), (2, 0, INTRA)])
    H = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [1.0, -1.0, 0.5]])
    out, alpha = gat.layer(Tensor(H), g, params)
    assert alpha.value[0, 1:].tolist() == [0.5, 0.5]
    np.testing.assert_allclose(out.value[0], H[1] @ params["W_right"].value @ params["f"][INTRA].value, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_layer_matches_loop_oracle_on_five_node_graph(seed):
    rng = np.random.default_rng(100 + seed)
    gat, _ = make_gat(d=4, seed=seed)
    params = gat.layers[0]
    edges = [(s, d, EdgeKind(int(rng.integers(3)))) for s in range(5) for d in range(5) if s != d and rng.random() < 0.5]
    g = HeteroGraph([NodeKind.UTTERANCE] * 5, list("abcde"), edges)
    H = rng.normal(size=(5, 4))
    out, alpha = gat.layer(Tensor(H), g, params)
    ref_out, ref_alpha = gat_layer_loops(H, edges, params["W_left"].value, params["W_right"].value,
                                         params["a"].value, [f.value for f in params["f"]])
    np.testing.assert_allclose(out.value, ref_out, atol=1e-10, rtol=0)
    np.testing.assert_allclose(alpha.value, ref_alpha, atol=1e-10, rtol=0)


def test_propagate_with_one_layer_is_transforms_then_layer():
    gat, cfg = make_gat(d=4, layers=2)
    g = fixture_graph()
    g.features = random_features(g, cfg, np.random.default_rng(0))
    states = gat.propagate(g, layers=1)
    H0 = gat.apply_node_transforms(g)
    out, _ = gat.layer(H0, g, gat.layers[0])
    np.testing.assert_array_equal(states.H[1].value, out.value)
    with pytest.raises(ValueError):
        gat.propagate(g, layers=0)


def test_attention_rows_are_distributions_in_every_layer():
    gat, cfg = make_gat(d=4, layers=2)
    for mode in ("none", "drop-intra", "drop-inter", "drop-utterance", "homogeneous"):
        g = ablate(fixture_graph(), mode)
        g.features = random_features(g, cfg, np.random.default_rng(1))
        mask, _ = g.dense()
        for alpha in gat.propagate(g).alpha:
            a = alpha.value
            has = mask.any(axis=1)
            assert np.all(np.abs(a[has].sum(axis=1) - 1.0) <= 1e-12)
            assert np.all(a[~mask] == 0.0)


def test_locality_beyond_l_hops():
    gat, cfg = make_gat(d=4, layers=1)
    g = fixture_graph()
    rng = np.random.default_rng(3)
    g.features = random_features(g, cfg, rng)
    base = gat.propagate(g).h_u.value
    # KG attribute nodes sit two hops from the utterance node
    g.features["kg"].value[0] += rng.normal(size=cfg.text_dim)
    assert gat.propagate(g).h_u.value.tobytes() == base.tobytes()
    g.features["kg"].value[5] += 1.0  # a KG global is adjacent
    assert gat.propagate(g).h_u.value.tobytes() != base.tobytes()


def test_tied_relations_equal_homogeneous_mode():
    gat, cfg = make_gat(d=4, layers=2, seed=8)
    for params in gat.layers:
        for f in params["f"][1:]:
            f.value[...] = params["f"][0].value
    g = fixture_graph()
    feats = random_features(g, cfg, np.random.default_rng(9))
    g.features = feats
    homo = ablate(g, "homogeneous")
    homo.features = feats
    a, b = gat.propagate(g), gat.propagate(homo)
    for x, y in zip(a.H, b.H):
        assert x.value.tobytes() == y.value.tobytes()


def test_build_graph_uses_member_means_for_globals():
    gat, cfg = make_gat(d=4)
    rng = np.random.default_rng(0)
    profile = ProfileEncoding(up=Tensor(rng.normal(size=(5, 3))), up_sizes=[3, 2], ca=Tensor(rng.normal(size=(2, 3))),
                              kg=Tensor(rng.normal(size=(5, cfg.text_dim))), kg_sizes=[3, 2], kg_names=["jazz", "tv"])
    h = Tensor(rng.normal(size=cfg.text_dim))
    g = build_graph(h, profile)
    assert g.num_nodes == 17 and len(g.edges) == 62
    np.testing.assert_allclose(g.features["kg"].value[5], profile.kg.value[:3].mean(axis=0), atol=1e-15)
    np.testing.assert_allclose(g.features["up"].value[6], profile.up.value[3:].mean(axis=0), atol=1e-15)
    np.testing.assert_array_equal(g.features["utterance"].value[0], h.value)
