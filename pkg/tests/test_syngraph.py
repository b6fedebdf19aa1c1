import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stylecluster.corpus import ROOT, ParsedSentence, TokenRec
from stylecluster.syngraph import (
    DENSE_MAX_NODES,
    DEP_PREFIX,
    UNK_LABEL,
    LabelVocab,
    SynGraph,
    build_syngraph,
    build_vocab,
    normalized_adjacency,
    to_dot,
)

from helpers import check_dot, random_sentence


def _sent(*toks):
    return ParsedSentence(tuple(TokenRec(*t) for t in toks))


SENT = _sent(("dogs", "NOUN", 1, "nsubj"), ("chase", "VERB", ROOT, "root"),
             ("cats", "NOUN", 1, "obj"))


class TestVocab:
    def test_layout(self):
        v = build_vocab([SENT])
        assert v.labels == ("NOUN", "VERB", DEP_PREFIX + "nsubj",
                            DEP_PREFIX + "obj", UNK_LABEL)
        assert v.unk_index == 4

    def test_root_relation_not_in_vocab(self):
        only_root = _sent(("go", "VERB", ROOT, "root"))
        v = build_vocab([only_root])
        assert v.labels == ("VERB", UNK_LABEL)

    def test_unk_fallback(self):
        v = build_vocab([SENT])
        assert v.encode("NOUN") == 0
        assert v.encode("XPOS") == v.unk_index
        assert v.encode(DEP_PREFIX + "iobj") == v.unk_index

    def test_display_strips_prefix(self):
        v = build_vocab([SENT])
        assert v.display(2) == "nsubj"
        assert v.display(0) == "NOUN"

    def test_must_end_with_unk(self):
        with pytest.raises(ValueError):
            LabelVocab(("NOUN",))
        with pytest.raises(ValueError):
            LabelVocab(("NOUN", "NOUN", UNK_LABEL))


class TestBuild:
    def test_basic_shape(self):
        v = build_vocab([SENT])
        g = build_syngraph(SENT, v)
        assert g.n_words == 3
        assert [v.labels[i] for i in g.node_labels] == [
            "NOUN", "VERB", "NOUN", DEP_PREFIX + "nsubj", DEP_PREFIX + "obj"]
        assert g.edges == ((0, 3), (1, 3), (1, 4), (2, 4))
        assert not g.directed

    def test_directed_orientation(self):
        v = build_vocab([SENT])
        g = build_syngraph(SENT, v, directed=True)
        # head -> relation -> dependent
        assert set(g.edges) == {(1, 3), (3, 0), (1, 4), (4, 2)}
        assert g.directed

    def test_same_label_relations_merge(self):
        s = _sent(("a", "NOUN", 1, "conj"), ("b", "VERB", ROOT, "root"),
                  ("c", "NOUN", 1, "conj"), ("d", "NOUN", 1, "conj"))
        v = build_vocab([s])
        g = build_syngraph(s, v)
        assert g.n_nodes == 5  # 4 words + 1 shared relation node
        rel = 4
        assert set(g.edges) == {(1, rel), (0, rel), (2, rel), (3, rel)}

    def test_root_token_contributes_no_relation_node(self):
        single = _sent(("go", "VERB", ROOT, "root"))
        v = build_vocab([single])
        g = build_syngraph(single, v)
        assert g.n_nodes == 1
        assert g.edges == ()

    def test_unseen_labels_map_to_unk(self):
        v = build_vocab([SENT])
        odd = _sent(("x", "XTAG", 1, "weird"), ("y", "VERB", ROOT, "root"))
        g = build_syngraph(odd, v)
        assert g.node_labels[0] == v.unk_index
        assert g.node_labels[2] == v.unk_index

    @given(st.integers(1, 25), st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_bipartite_and_size_bound(self, n, seed):
        rng = np.random.default_rng(seed)
        s = random_sentence(rng, n)
        v = build_vocab([s])
        g = build_syngraph(s, v)
        assert g.n_nodes <= 2 * n
        for a, b in g.edges:
            # every edge joins a word node and a relation node
            assert (a < g.n_words) != (b < g.n_words)

    def test_malformed_graph_rejected(self):
        with pytest.raises(ValueError):
            SynGraph((0, 1), ((0, 5),), False, 2)
        with pytest.raises(ValueError):
            SynGraph((0,), (), False, 3)


class TestAdjacency:
    def test_hand_computed_undirected(self):
        v = build_vocab([SENT])
        g = build_syngraph(SENT, v)
        a = normalized_adjacency(g)
        # degrees with self-loops: words 2,3,2 ; relation nodes 3,3
        raw = np.zeros((5, 5))
        for s, d in g.edges:
            raw[s, d] = raw[d, s] = 1.0
        raw += np.eye(5)
        deg = raw.sum(axis=1)
        want = raw / np.sqrt(np.outer(deg, deg))
        np.testing.assert_allclose(a, want, atol=1e-15)
        np.testing.assert_allclose(a, a.T, atol=0)

    def test_directed_rows_sum_to_one(self):
        v = build_vocab([SENT])
        g = build_syngraph(SENT, v, directed=True)
        a = normalized_adjacency(g)
        np.testing.assert_allclose(a.sum(axis=1), np.ones(g.n_nodes), atol=1e-15)

    def test_isolated_node_self_loop(self):
        single = _sent(("go", "VERB", ROOT, "root"))
        v = build_vocab([single])
        a = normalized_adjacency(build_syngraph(single, v))
        np.testing.assert_allclose(a, [[1.0]])

    def test_sparse_matches_dense(self):
        # force a graph just over the dense cutoff by chaining many tokens
        # with distinct relation labels
        n = DENSE_MAX_NODES // 2 + 5
        deps = [f"r{i}" for i in range(n)]
        toks = [TokenRec("w0", "NOUN", ROOT, "root")]
        for i in range(1, n):
            toks.append(TokenRec(f"w{i}", "NOUN", i - 1, deps[i]))
        s = ParsedSentence(tuple(toks))
        v = build_vocab([s])
        g = build_syngraph(s, v)
        assert g.n_nodes > DENSE_MAX_NODES
        a = normalized_adjacency(g)
        assert sp.issparse(a)

        dense = np.zeros((g.n_nodes, g.n_nodes))
        for x, y in g.edges:
            dense[x, y] = dense[y, x] = 1.0
        dense += np.eye(g.n_nodes)
        deg = dense.sum(axis=1)
        want = dense / np.sqrt(np.outer(deg, deg))
        np.testing.assert_allclose(a.toarray(), want, atol=1e-14)

    @given(st.integers(2, 20), st.integers(0, 10**6), st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_rows_bounded(self, n, seed, directed):
        rng = np.random.default_rng(seed)
        g = build_syngraph(random_sentence(rng, n), build_vocab([]), directed)
        a = normalized_adjacency(g)
        assert np.all(np.isfinite(a))
        if directed:
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        else:
            np.testing.assert_allclose(a, a.T, atol=0)


class TestDot:
    def test_valid_and_shapes(self):
        v = build_vocab([SENT])
        g = build_syngraph(SENT, v)
        dot = to_dot(g, v, forms=[t.form for t in SENT.tokens])
        check_dot(dot)
        assert "shape=box" in dot and "shape=ellipse" in dot
        assert "dogs" in dot and "nsubj" in dot

    def test_directed_uses_arrows(self):
        v = build_vocab([SENT])
        dot = to_dot(build_syngraph(SENT, v, directed=True), v)
        check_dot(dot)
        assert "->" in dot
