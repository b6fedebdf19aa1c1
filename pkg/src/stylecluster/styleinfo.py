"""Style analysis over syntax graphs: a labeled motif census (stars,
triangles, 4-node paths), a word-level summary/oracle co-occurrence graph
with DOT export, and per-cluster compression statistics.

Motifs are counted on undirected graphs only, instance by instance: a node of
degree five contributes C(5,3) star instances, and a path instance is counted
once regardless of traversal direction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .corpus import ROOT, DocumentSample, ParsedSentence, select_oracle
from .syngraph import LabelVocab, SynGraph

COOC_TAGS = {"NOUN", "PROPN", "VERB"}

_SHAPE_ARITY = {"Star": 4, "Tri": 3, "Four": 4}


@dataclass(frozen=True)
class MotifKey:
    role: str          # "O" (oracle graph) or "S" (summary graph)
    shape: str         # Star | Tri | Four
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.role not in ("O", "S"):
            raise ValueError(f"role must be O or S, got {self.role!r}")
        if self.shape not in _SHAPE_ARITY:
            raise ValueError(f"unknown shape {self.shape!r}")
        if len(self.labels) != _SHAPE_ARITY[self.shape]:
            raise ValueError(
                f"{self.shape} takes {_SHAPE_ARITY[self.shape]} labels, got {len(self.labels)}")

    def __str__(self) -> str:
        return f"{self.role} {self.shape} " + " ".join(self.labels)


@dataclass
class MotifCensus:
    counts: dict[MotifKey, int]
    ratios: dict[MotifKey, float]
    total: int

    @classmethod
    def from_counts(cls, counts: dict[MotifKey, int]) -> "MotifCensus":
        total = sum(counts.values())
        ratios = {k: (c / total if total else 0.0) for k, c in counts.items()}
        return cls(counts, ratios, total)


def _neighbor_sets(graph: SynGraph) -> list[set[int]]:
    nbr: list[set[int]] = [set() for _ in range(graph.n_nodes)]
    for s, d in graph.edges:
        nbr[s].add(d)
        nbr[d].add(s)
    return nbr


def count_motifs(graph: SynGraph, vocab: LabelVocab, role: str) -> MotifCensus:
    """Instance census of stars (center + any 3 neighbors), triangles, and
    simple 4-node paths, keyed by canonicalized display labels."""
    if graph.directed:
        raise ValueError("motifs are defined on the undirected graph variant")
    nbr = _neighbor_sets(graph)
    disp = [vocab.display(l) for l in graph.node_labels]
    counts: dict[MotifKey, int] = {}

    def bump(key: MotifKey) -> None:
        counts[key] = counts.get(key, 0) + 1

    for center in range(graph.n_nodes):
        for leaves in itertools.combinations(sorted(nbr[center]), 3):
            labels = (disp[center],) + tuple(sorted(disp[v] for v in leaves))
            bump(MotifKey(role, "Star", labels))

    for s, d in graph.edges:
        a, b = (s, d) if s < d else (d, s)
        for c in nbr[a] & nbr[b]:
            if c > b:
                bump(MotifKey(role, "Tri", tuple(sorted((disp[a], disp[b], disp[c])))))

    for b in range(graph.n_nodes):
        for c in nbr[b]:
            for a in nbr[b]:
                if a == c:
                    continue
                for d in nbr[c]:
                    if d in (a, b):
                        continue
                    # one instance per node set traversal; keep one orientation
                    if (a, b, c, d) < (d, c, b, a):
                        seq = (disp[a], disp[b], disp[c], disp[d])
                        bump(MotifKey(role, "Four", min(seq, seq[::-1])))

    return MotifCensus.from_counts(counts)


@dataclass
class CensusRow:
    key: MotifKey
    cluster: str
    mean_ratio: float
    instance_count: int


@dataclass
class CensusReport:
    rows: list[CensusRow]
    distinct_keys: int
    ranked_keys: list[MotifKey]

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("role,shape,labels,cluster,mean_ratio,instance_count\n")
            for r in self.rows:
                labels = " ".join(r.key.labels)
                f.write(f"{r.key.role},{r.key.shape},{labels},{r.cluster},"
                        f"{r.mean_ratio!r},{r.instance_count}\n")


def census_report(cluster_censuses: dict[str, list[MotifCensus]],
                  top_k: int = 15) -> CensusReport:
    """Rank motifs by mean per-graph ratio over every graph in every cluster,
    then report each of the top_k keys per cluster."""
    if not cluster_censuses or any(not v for v in cluster_censuses.values()):
        raise ValueError("every cluster needs at least one census")

    all_keys: set[MotifKey] = set()
    for censuses in cluster_censuses.values():
        for c in censuses:
            all_keys.update(c.counts)

    n_graphs = sum(len(v) for v in cluster_censuses.values())
    overall: dict[MotifKey, float] = {}
    for key in all_keys:
        s = sum(c.ratios.get(key, 0.0)
                for censuses in cluster_censuses.values() for c in censuses)
        overall[key] = s / n_graphs
    ranked = sorted(all_keys, key=lambda k: (-overall[k], str(k)))[:top_k]

    rows = []
    for key in ranked:
        for cluster in sorted(cluster_censuses):
            censuses = cluster_censuses[cluster]
            mean_ratio = sum(c.ratios.get(key, 0.0) for c in censuses) / len(censuses)
            count = sum(c.counts.get(key, 0) for c in censuses)
            rows.append(CensusRow(key, cluster, mean_ratio, count))
    return CensusReport(rows, len(all_keys), ranked)


# ---------------------------------------------------------------------------
# Summary/oracle co-occurrence graph
# ---------------------------------------------------------------------------


@dataclass
class SummaryOracleGraph:
    """Word-level view of the oracle and summary dependency trees, with
    co-occurrence links between content words sharing a lowercased form."""

    oracle: ParsedSentence
    summary: ParsedSentence
    oracle_edges: list[tuple[int, int, str]]   # (head, dependent, deprel)
    summary_edges: list[tuple[int, int, str]]
    cooc_edges: list[tuple[int, int]]          # (oracle idx, summary idx)
    oracle_root: int
    summary_root: int


def _tree_edges(sentence: ParsedSentence) -> tuple[list[tuple[int, int, str]], int]:
    edges = []
    root = -1
    for i, t in enumerate(sentence.tokens):
        if t.head == ROOT:
            root = i
        else:
            edges.append((t.head, i, t.deprel))
    return edges, root


def build_summary_oracle_graph(sample: DocumentSample) -> SummaryOracleGraph:
    """Pair the first summary sentence with its oracle article sentence."""
    summary = sample.summary[0]
    oracle_idx, _score = select_oracle(summary, sample.article)
    oracle = sample.article[oracle_idx]
    o_edges, o_root = _tree_edges(oracle)
    s_edges, s_root = _tree_edges(summary)
    cooc = [
        (i, j)
        for i, ot in enumerate(oracle.tokens)
        if ot.upos in COOC_TAGS
        for j, st in enumerate(summary.tokens)
        if st.upos in COOC_TAGS and ot.form.lower() == st.form.lower()
    ]
    return SummaryOracleGraph(oracle, summary, o_edges, s_edges, cooc,
                              o_root, s_root)


def summary_oracle_dot(g: SummaryOracleGraph, name: str = "sograph") -> str:
    """DOT text: oracle dependencies green, summary blue, co-occurrence
    orange and dashed; the two root words carry self-loops."""
    lines = [f"digraph {name} {{"]
    for i, t in enumerate(g.oracle.tokens):
        lines.append(f'  o{i} [label="{t.form}\\n{t.upos}", shape=ellipse];')
    for j, t in enumerate(g.summary.tokens):
        lines.append(f'  s{j} [label="{t.form}\\n{t.upos}", shape=ellipse, style=filled];')
    for h, d, rel in g.oracle_edges:
        lines.append(f'  o{h} -> o{d} [label="{rel}", color=green];')
    for h, d, rel in g.summary_edges:
        lines.append(f'  s{h} -> s{d} [label="{rel}", color=blue];')
    if g.oracle_root >= 0:
        lines.append(f"  o{g.oracle_root} -> o{g.oracle_root} [color=green];")
    if g.summary_root >= 0:
        lines.append(f"  s{g.summary_root} -> s{g.summary_root} [color=blue];")
    for i, j in g.cooc_edges:
        lines.append(f"  o{i} -> s{j} [color=orange, style=dashed, dir=none];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Compression statistics
# ---------------------------------------------------------------------------


@dataclass
class CompressionStats:
    n_samples: int
    mean_length_ratio: float      # oracle tokens / summary tokens
    mean_alignments: float        # co-occurrence edges per sample
    skipped: list[str] = field(default_factory=list)


def compression_stats(sample_ids: list[str],
                      samples_by_id: dict[str, DocumentSample]) -> CompressionStats:
    """Oracle-to-summary token-count ratio and co-occurrence counts, averaged
    over the given sample ids; unknown ids are recorded, not fatal."""
    ratios = []
    aligns = []
    skipped = []
    for sid in sample_ids:
        sample = samples_by_id.get(sid)
        if sample is None:
            skipped.append(sid)
            continue
        g = build_summary_oracle_graph(sample)
        ratios.append(len(g.oracle.tokens) / len(g.summary.tokens))
        aligns.append(len(g.cooc_edges))
    n = len(ratios)
    return CompressionStats(
        n_samples=n,
        mean_length_ratio=sum(ratios) / n if n else 0.0,
        mean_alignments=sum(aligns) / n if n else 0.0,
        skipped=skipped,
    )
