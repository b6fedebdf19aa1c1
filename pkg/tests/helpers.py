"""Shared test utilities: random tree sentences, independently-coded oracles
for graph motifs and the network forward pass, and a small DOT format check."""

from __future__ import annotations

import itertools
import re

import numpy as np

from stylecluster.corpus import ROOT, ParsedSentence, TokenRec

POS_POOL = ("NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON", "PROPN")
DEP_POOL = ("nsubj", "obj", "amod", "det", "advmod", "case", "obl", "nmod")


def random_sentence(rng: np.random.Generator, n_tokens: int,
                    tags=POS_POOL, deps=DEP_POOL) -> ParsedSentence:
    """Random single-rooted tree: token 0 is the root, each later token picks
    an earlier token as head, which rules out cycles by construction."""
    toks = []
    for i in range(n_tokens):
        tag = str(rng.choice(tags))
        if i == 0:
            toks.append(TokenRec(f"w{i}", tag, ROOT, "root"))
        else:
            head = int(rng.integers(i))
            toks.append(TokenRec(f"w{i}", tag, head, str(rng.choice(deps))))
    return ParsedSentence(tuple(toks))


def adjacency_sets(graph):
    """Undirected neighbor sets, regardless of stored edge orientation."""
    nbr = {i: set() for i in range(graph.n_nodes)}
    for s, d in graph.edges:
        nbr[s].add(d)
        nbr[d].add(s)
    return nbr


def brute_force_motifs(graph, vocab):
    """Enumerate star, triangle, and path-of-4 motifs by exhaustive subset
    scan. Returns three dicts keyed the same way the library keys them.

    Deliberately written as a direct definition transcription, independent of
    the library's counting strategy."""
    nbr = adjacency_sets(graph)
    n = graph.n_nodes
    disp = [vocab.display(l) for l in graph.node_labels]

    stars: dict[tuple, int] = {}
    for center in range(n):
        for leaves in itertools.combinations(sorted(nbr[center]), 3):
            key = ("star", disp[center], tuple(sorted(disp[v] for v in leaves)))
            stars[key] = stars.get(key, 0) + 1

    tris: dict[tuple, int] = {}
    for a, b, c in itertools.combinations(range(n), 3):
        if b in nbr[a] and c in nbr[a] and c in nbr[b]:
            key = ("tri", tuple(sorted((disp[a], disp[b], disp[c]))))
            tris[key] = tris.get(key, 0) + 1

    # simple 4-paths; walk all ordered paths, dedupe by orientation
    paths: dict[tuple, int] = {}
    seen: set[tuple] = set()
    for a in range(n):
        for b in nbr[a]:
            for c in nbr[b] - {a}:
                for d in nbr[c] - {a, b}:
                    tup = (a, b, c, d)
                    if tup[::-1] in seen:
                        continue
                    seen.add(tup)
                    lab = tuple(disp[v] for v in tup)
                    key = ("path4", min(lab, lab[::-1]))
                    paths[key] = paths.get(key, 0) + 1
    return stars, tris, paths


def dense_gcn_forward(adj, labels, embed, weights):
    """Straight-line re-statement of the forward pass used as an oracle."""
    a = np.asarray(adj.todense()) if hasattr(adj, "todense") else np.asarray(adj)
    h = embed[np.asarray(labels)]
    for w in weights:
        h = np.maximum(a @ h @ w, 0.0)
    return h.mean(axis=0)


def min_prerelu_gap(embed, weights, graph_inputs):
    """Smallest |pre-activation| over all layers of all graphs.

    Finite differences are only trustworthy away from the relu kink, so
    gradient tests skip instances where this gap is tiny."""
    gap = np.inf
    for adj, labels in graph_inputs:
        a = np.asarray(adj.todense()) if hasattr(adj, "todense") else np.asarray(adj)
        h = embed[np.asarray(labels)]
        for w in weights:
            z = a @ h @ w
            gap = min(gap, float(np.min(np.abs(z))))
            h = np.maximum(z, 0.0)
    return gap


def numeric_gradient(f, x, step=1e-4):
    """Central finite differences of a scalar function over an ndarray."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * step)
    return g


_DOT_HEADER = re.compile(r"^(strict\s+)?(di)?graph(\s+\w+)?\s*\{$")
_DOT_NODE = re.compile(r'^\w+\s*(\[[^\[\]]*\])?;$')
_DOT_EDGE = re.compile(r'^\w+\s*(--|->)\s*\w+\s*(\[[^\[\]]*\])?;$')


def check_dot(text: str) -> None:
    """Assert the string is structurally valid DOT of the shape we emit:
    header, node/edge statements with optional attribute lists, closing brace.
    Quoted attribute values may contain anything except a bare quote."""
    lines = [l.strip() for l in text.strip().splitlines()]
    assert _DOT_HEADER.match(lines[0]), f"bad header: {lines[0]!r}"
    assert lines[-1] == "}", f"bad closer: {lines[-1]!r}"
    directed = lines[0].startswith("digraph") or "digraph" in lines[0].split("{")[0]
    for line in lines[1:-1]:
        if not line or line.startswith("//"):
            continue
        # neutralize quoted strings so regexes see a plain token
        assert line.count('"') % 2 == 0, f"unbalanced quotes: {line!r}"
        flat = re.sub(r'"[^"]*"', "q", line)
        if _DOT_EDGE.match(flat):
            op = "->" if "->" in flat else "--"
            assert (op == "->") == directed, f"edge operator mismatch: {line!r}"
        elif _DOT_NODE.match(flat):
            pass
        else:
            raise AssertionError(f"unrecognized DOT statement: {line!r}")
