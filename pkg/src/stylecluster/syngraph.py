"""Syntax graphs: each parsed sentence becomes a graph whose nodes are the
words (labeled by POS tag) plus one relation node per distinct dependency
label, wired between head and dependent. Words never connect directly to
words, so the graph is bipartite between word nodes and relation nodes.

Also provides the label vocabulary shared by all graphs and the normalized
adjacency operator used by the network forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import ROOT, ParsedSentence

UNK_LABEL = "<unk>"
DEP_PREFIX = "dep:"

# beyond this many nodes the adjacency switches to a sparse matrix
DENSE_MAX_NODES = 512


@dataclass(frozen=True)
class LabelVocab:
    """Node label inventory: POS tags, then prefixed dependency labels, then
    the unknown marker in the last slot."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels or self.labels[-1] != UNK_LABEL:
            raise ValueError(f"vocab must end with {UNK_LABEL}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("vocab labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def unk_index(self) -> int:
        return len(self.labels) - 1

    def encode(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            return self.unk_index

    def display(self, idx: int) -> str:
        lab = self.labels[idx]
        return lab[len(DEP_PREFIX):] if lab.startswith(DEP_PREFIX) else lab


def build_vocab(sentences: Iterable[ParsedSentence]) -> LabelVocab:
    """Collect POS tags and dependency labels across the corpus.

    The root relation never becomes a node, so labels that only ever mark the
    root are left out of the vocabulary."""
    tags: set[str] = set()
    deps: set[str] = set()
    for sent in sentences:
        for tok in sent.tokens:
            tags.add(tok.upos)
            if tok.head != ROOT:
                deps.add(DEP_PREFIX + tok.deprel)
    labels = tuple(sorted(tags)) + tuple(sorted(deps)) + (UNK_LABEL,)
    return LabelVocab(labels)


@dataclass(frozen=True)
class SynGraph:
    """Word/relation graph for one sentence.

    ``node_labels`` holds vocabulary indices; word nodes occupy positions
    ``0..n_words-1`` in token order, relation nodes follow in order of first
    appearance. Undirected edges are stored with the lower index first."""

    node_labels: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    directed: bool
    n_words: int

    def __post_init__(self):
        if self.n_words > len(self.node_labels):
            raise ValueError("n_words exceeds node count")
        for s, d in self.edges:
            if not (0 <= s < len(self.node_labels) and 0 <= d < len(self.node_labels)):
                raise ValueError("edge endpoint out of range")

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)


def build_syngraph(sentence: ParsedSentence, vocab: LabelVocab,
                   directed: bool = False) -> SynGraph:
    """Build the syntax graph for one sentence.

    Every dependency contributes the pair of edges head->relation and
    relation->dependent; relation nodes with the same label are shared within
    the sentence. The root token gets no relation node at all, which keeps the
    node count at or below twice the token count."""
    n = len(sentence.tokens)
    labels = [vocab.encode(t.upos) for t in sentence.tokens]
    rel_node: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    for i, tok in enumerate(sentence.tokens):
        if tok.head == ROOT:
            continue
        lab = DEP_PREFIX + tok.deprel
        if lab not in rel_node:
            rel_node[lab] = len(labels)
            labels.append(vocab.encode(lab))
        r = rel_node[lab]
        for s, d in ((tok.head, r), (r, i)):
            edges.add((s, d) if directed or s < d else (d, s))
    return SynGraph(tuple(labels), tuple(sorted(edges)), directed, n)


def normalized_adjacency(graph: SynGraph):
    """Self-loop-augmented, degree-normalized adjacency.

    Undirected graphs get the symmetric normalization
    D^{-1/2} (A + I) D^{-1/2}; directed graphs the row-stochastic
    D^{-1} (A + I). Dense ndarray up to DENSE_MAX_NODES nodes, CSR beyond."""
    n = graph.n_nodes
    if n <= DENSE_MAX_NODES:
        a = np.zeros((n, n), dtype=np.float64)
        for s, d in graph.edges:
            a[s, d] = 1.0
            if not graph.directed:
                a[d, s] = 1.0
        a += np.eye(n)
        deg = a.sum(axis=1)
        if graph.directed:
            return a / deg[:, None]
        inv = 1.0 / np.sqrt(deg)
        return a * inv[:, None] * inv[None, :]

    rows, cols = [], []
    for s, d in graph.edges:
        rows.append(s)
        cols.append(d)
        if not graph.directed:
            rows.append(d)
            cols.append(s)
    rows.extend(range(n))
    cols.extend(range(n))
    a = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    if graph.directed:
        return sp.diags(1.0 / deg) @ a
    inv = sp.diags(1.0 / np.sqrt(deg))
    return (inv @ a @ inv).tocsr()


def to_dot(graph: SynGraph, vocab: LabelVocab,
           forms: Sequence[str] | None = None, name: str = "syngraph") -> str:
    """DOT rendering for eyeballing graphs; relation nodes are boxes."""
    kind = "digraph" if graph.directed else "graph"
    arrow = "->" if graph.directed else "--"
    lines = [f"{kind} {name} {{"]
    for i, lab_idx in enumerate(graph.node_labels):
        lab = vocab.display(lab_idx)
        if i < graph.n_words:
            text = f"{forms[i]}\\n{lab}" if forms is not None else lab
            lines.append(f'  n{i} [label="{text}", shape=ellipse];')
        else:
            lines.append(f'  n{i} [label="{lab}", shape=box];')
    for s, d in graph.edges:
        lines.append(f"  n{s} {arrow} n{d};")
    lines.append("}")
    return "\n".join(lines) + "\n"
