"""Ranking trainer: turns corpus samples into (user, positive, negative)
graph triples, fits the graph scorer with Adam on the margin ranking loss,
and produces per-sample style embeddings.

The held-out split is decided per sample id by hashing, so it is stable
across runs and independent of corpus order.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .corpus import DocumentSample, Skip, extract_triplet, triplet_rng
from .gcnnet import (
    AdamState,
    GcnParams,
    TrainConfig,
    accumulate,
    adam_step,
    backward_triplet,
    forward_graph,
    init_params,
    scale_grads,
)
from .syngraph import LabelVocab, build_syngraph, normalized_adjacency
from .util import ordered_map


@dataclass
class GraphInputs:
    adjacency: object
    labels: np.ndarray


@dataclass
class TripletGraphs:
    sample_id: str
    user: GraphInputs
    pos: GraphInputs
    neg: GraphInputs


@dataclass(frozen=True)
class StyleEmbedding:
    sample_id: str
    vector: np.ndarray  # (2 * hidden_dim,) float32


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    seconds: float


@dataclass
class TrainLog:
    n_train: int
    n_val: int
    epochs: list[EpochStats]
    stopped_early: bool = False

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,train_loss,val_loss,val_accuracy,seconds\n")
            for e in self.epochs:
                f.write(f"{e.epoch},{e.train_loss!r},{e.val_loss!r},"
                        f"{e.val_accuracy!r},{e.seconds:.3f}\n")


def is_validation(sample_id: str, val_fraction: float) -> bool:
    """Hash-based held-out membership, stable across runs and machines."""
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "little")
    return u / 2.0**64 < val_fraction


def _graph_inputs(sentence, vocab: LabelVocab, directed: bool) -> GraphInputs:
    g = build_syngraph(sentence, vocab, directed)
    return GraphInputs(normalized_adjacency(g), np.array(g.node_labels, dtype=np.int64))


def build_triplet_graphs(samples: list[DocumentSample], vocab: LabelVocab,
                         corpus_seed: int, directed: bool = False,
                         threads: int | None = None,
                         ) -> tuple[list[TripletGraphs], list[tuple[str, str]]]:
    """Prepare ranking triples for every usable sample.

    Returns (triples, skipped) where skipped pairs sample ids with reasons.
    Negative sampling depends only on (corpus_seed, sample_id), not on corpus
    order."""
    skipped: list[tuple[str, str]] = []
    todo: list[tuple[str, object, object, object]] = []
    for s in samples:
        t = extract_triplet(s, triplet_rng(corpus_seed, s.id))
        if isinstance(t, Skip):
            skipped.append((s.id, t.reason))
            continue
        todo.append((s.id, t.user, s.article[t.oracle_idx], s.article[t.negative_idx]))

    def prep(item):
        sid, user, pos, neg = item
        return TripletGraphs(sid,
                             _graph_inputs(user, vocab, directed),
                             _graph_inputs(pos, vocab, directed),
                             _graph_inputs(neg, vocab, directed))

    return ordered_map(prep, todo, threads), skipped


def _pair_scores(params: GcnParams, t: TripletGraphs) -> tuple[float, float]:
    from .gcnnet import score_pair

    user = forward_graph(params, t.user.adjacency, t.user.labels)
    pos = forward_graph(params, t.pos.adjacency, t.pos.labels)
    neg = forward_graph(params, t.neg.adjacency, t.neg.labels)
    return (score_pair(params, pos.pooled, user.pooled),
            score_pair(params, neg.pooled, user.pooled))


def ranking_accuracy(params: GcnParams, triplets: list[TripletGraphs]) -> float:
    """Fraction of triples scoring the positive strictly above the negative.

    Ties count as failures; an empty list scores 0.0."""
    if not triplets:
        return 0.0
    hits = 0
    for t in triplets:
        s_pos, s_neg = _pair_scores(params, t)
        if s_pos > s_neg:
            hits += 1
    return hits / len(triplets)


def mean_loss(params: GcnParams, triplets: list[TripletGraphs], margin: float) -> float:
    from .gcnnet import triplet_loss

    if not triplets:
        return 0.0
    total = 0.0
    for t in triplets:
        s_pos, s_neg = _pair_scores(params, t)
        total += triplet_loss(s_pos, s_neg, margin)
    return total / len(triplets)


def train(triplets: list[TripletGraphs], vocab_size: int,
          cfg: TrainConfig) -> tuple[GcnParams, TrainLog]:
    """Fit the scorer; returns the best-on-validation parameter snapshot.

    Minibatch order reshuffles every epoch from a seed derived from
    (cfg.seed, epoch), gradients within a batch are reduced in sample order,
    and early stopping fires after cfg.patience epochs without a validation
    accuracy improvement. Without a validation split the final parameters are
    returned and no early stopping happens."""
    if not triplets:
        raise ValueError("no triplets to train on")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(vocab_size, cfg.hidden_dim, rng)

    train_set = [t for t in triplets if not is_validation(t.sample_id, cfg.val_fraction)]
    val_set = [t for t in triplets if is_validation(t.sample_id, cfg.val_fraction)]
    if not train_set:
        raise ValueError("validation split swallowed every sample")

    log = TrainLog(n_train=len(train_set), n_val=len(val_set), epochs=[])
    state = AdamState.for_params(params)
    best = params.copy()
    best_acc = -1.0
    stale = 0

    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        order = np.random.default_rng([cfg.seed, 1000 + epoch]).permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            grads = params.zeros_like()
            batch_loss = 0.0
            for t in batch:
                user = forward_graph(params, t.user.adjacency, t.user.labels)
                pos = forward_graph(params, t.pos.adjacency, t.pos.labels)
                neg = forward_graph(params, t.neg.adjacency, t.neg.labels)
                g, loss = backward_triplet(params, user, pos, neg, cfg.margin)
                accumulate(grads, g)
                batch_loss += loss
            scale_grads(grads, 1.0 / len(batch))
            adam_step(params, grads, state, cfg.lr)
            epoch_loss += batch_loss
        epoch_loss /= len(train_set)
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")

        val_loss = mean_loss(params, val_set, cfg.margin)
        val_acc = ranking_accuracy(params, val_set)
        log.epochs.append(EpochStats(epoch, epoch_loss, val_loss, val_acc,
                                     time.monotonic() - t0))
        if val_set:
            if val_acc > best_acc:
                best_acc = val_acc
                best = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.stopped_early = True
                    break

    if not val_set:
        best = params
    return best, log


# ---------------------------------------------------------------------------
# Style embeddings: user-sentence vector next to oracle-sentence vector
# ---------------------------------------------------------------------------

EMBED_MAGIC = b"SSE1"


class EmbeddingError(Exception):
    pass


def embed_corpus(params: GcnParams, triplets: list[TripletGraphs]) -> list[StyleEmbedding]:
    """Concatenate pooled user and pooled positive vectors per sample."""
    out = []
    seen: set[str] = set()
    for t in triplets:
        if t.sample_id in seen:
            raise EmbeddingError(f"duplicate sample id {t.sample_id!r}")
        seen.add(t.sample_id)
        user = forward_graph(params, t.user.adjacency, t.user.labels)
        pos = forward_graph(params, t.pos.adjacency, t.pos.labels)
        vec = np.concatenate([user.pooled, pos.pooled]).astype(np.float32)
        out.append(StyleEmbedding(t.sample_id, vec))
    return out


def save_embeddings(path: str, embeddings: list[StyleEmbedding]) -> None:
    import struct

    if not embeddings:
        raise EmbeddingError("refusing to write an empty embeddings file")
    dim = embeddings[0].vector.shape[0]
    seen: set[str] = set()
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<II", len(embeddings), dim))
        for e in embeddings:
            if e.sample_id in seen:
                raise EmbeddingError(f"duplicate sample id {e.sample_id!r}")
            seen.add(e.sample_id)
            if e.vector.shape != (dim,):
                raise EmbeddingError(
                    f"embedding {e.sample_id!r} has dim {e.vector.shape[0]}, want {dim}")
            sid = e.sample_id.encode("utf-8")
            f.write(struct.pack("<H", len(sid)))
            f.write(sid)
            f.write(np.ascontiguousarray(e.vector, dtype="<f4").tobytes())


def load_embeddings(path: str) -> list[StyleEmbedding]:
    import struct

    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != EMBED_MAGIC:
            raise EmbeddingError("not an embeddings file")
        header = f.read(8)
        if len(header) != 8:
            raise EmbeddingError("embeddings file truncated")
        count, dim = struct.unpack("<II", header)
        out = []
        for _i in range(count):
            raw = f.read(2)
            if len(raw) != 2:
                raise EmbeddingError("embeddings file truncated")
            (id_len,) = struct.unpack("<H", raw)
            sid = f.read(id_len)
            vec = f.read(dim * 4)
            if len(sid) != id_len or len(vec) != dim * 4:
                raise EmbeddingError("embeddings file truncated")
            out.append(StyleEmbedding(sid.decode("utf-8"),
                                      np.frombuffer(vec, dtype="<f4").copy()))
        if f.read(1):
            raise EmbeddingError("trailing bytes after embeddings payload")
    return out


def embeddings_to_csv(path: str, embeddings: list[StyleEmbedding]) -> None:
    """Human-inspectable mirror of the binary embeddings file."""
    if not embeddings:
        raise EmbeddingError("refusing to write an empty embeddings file")
    dim = embeddings[0].vector.shape[0]
    with open(path, "w", encoding="utf-8") as f:
        f.write("sample_id," + ",".join(f"e{i}" for i in range(dim)) + "\n")
        for e in embeddings:
            vals = ",".join(repr(float(x)) for x in e.vector)
            f.write(f"{e.sample_id},{vals}\n")
