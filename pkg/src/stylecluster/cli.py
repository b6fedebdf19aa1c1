"""Pipeline driver: one executable, one subcommand per stage.

Stages communicate only through workdir artifacts, so each subcommand checks
that its inputs exist and names the command that produces them when they do
not. Exit codes: 0 success, 1 bad input or unmet prerequisite, 2 unexpected
internal failure. Seeds come from --seed or the config; every stage derives
its generator from that one seed, so reruns are reproducible end to end.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback

import numpy as np

from .artifacts import (
    ArtifactError,
    Workdir,
    load_config,
    record_run,
    resolve_workdir,
)
from .clusterer import (
    CentroidModel,
    ClusterError,
    clusters_to_csv,
    fit_model,
    load_centroids,
    make_baselines,
    make_cluster_splits,
    project_2d,
    projection_to_csv,
    save_centroids,
    silhouette,
    write_split,
)
from .corpus import (
    CorpusError,
    Skip,
    SyntheticConfig,
    extract_triplet,
    generate_synthetic_corpus,
    load_parsed_corpus,
    select_oracle,
    triplet_rng,
)
from .evalmetrics import (
    RunError,
    cluster_best,
    evaluate_run,
    load_generated_run,
)
from .gcnnet import CheckpointError, TrainConfig, load_checkpoint, save_checkpoint
from .ltrs import (
    EmbeddingError,
    build_triplet_graphs,
    embed_corpus,
    embeddings_to_csv,
    load_embeddings,
    save_embeddings,
)
from .styleinfo import build_summary_oracle_graph, census_report, count_motifs, summary_oracle_dot
from .syngraph import LabelVocab, build_syngraph, build_vocab
from .util import canonical_json

log = logging.getLogger("stylecluster")

USER_ERRORS = (ArtifactError, CorpusError, ClusterError, RunError,
               EmbeddingError, CheckpointError, ValueError, OSError)


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        self.seed = args.seed if args.seed is not None else self.cfg["seed"]
        self.threads = args.threads
        self._wd = None

    @property
    def wd(self) -> Workdir:
        if self._wd is None:
            self._wd = Workdir(resolve_workdir(self.args.workdir, self.cfg))
        return self._wd


# ---------------------------------------------------------------------------
# Shared stage plumbing
# ---------------------------------------------------------------------------


def _load_samples(path: str):
    loader = load_parsed_corpus(path)
    samples = list(loader)
    if loader.rejected:
        log.warning("%d corpus records rejected; see `validate` for details",
                    len(loader.rejected))
    if not samples:
        raise ArtifactError(f"corpus {path} holds no usable samples")
    return samples


def _resolve_corpus(ctx: Context) -> str:
    cand = getattr(ctx.args, "corpus", None) or ctx.cfg["paths"]["corpus"]
    if cand:
        if not os.path.exists(cand):
            raise ArtifactError(f"corpus not found: {cand}")
        return cand
    p = ctx.wd.latest("synthetic.jsonl")
    if p:
        return p
    raise ArtifactError(
        "no corpus available: pass --corpus, set paths.corpus, or run synth first")


def _save_vocab(path: str, vocab: LabelVocab) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json({"labels": list(vocab.labels)}) + "\n")


def _load_vocab(path: str) -> LabelVocab:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    labels = data.get("labels")
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ArtifactError(f"vocab file {path} is malformed")
    return LabelVocab(tuple(labels))


def _triplet_records(samples, seed: int) -> list[dict]:
    records = []
    for s in samples:
        t = extract_triplet(s, triplet_rng(seed, s.id))
        if isinstance(t, Skip):
            continue
        records.append({
            "sample_id": t.sample_id,
            "oracle_idx": t.oracle_idx,
            "negative_idx": t.negative_idx,
            "oracle_score": t.oracle_score,
        })
    return records


def _check_triplets_current(path: str, samples, seed: int) -> None:
    """Stored triplet picks must match what this corpus and seed produce."""
    with open(path, "r", encoding="utf-8") as f:
        stored = [json.loads(line) for line in f if line.strip()]
    fresh = _triplet_records(samples, seed)
    key = lambda r: (r["sample_id"], r["oracle_idx"], r["negative_idx"])
    if [key(r) for r in stored] != [key(r) for r in fresh]:
        raise ArtifactError(
            "triplets artifact does not match this corpus and seed; run graphs first")


def _prepared_graphs(ctx: Context, samples, vocab: LabelVocab):
    graphs, skipped = build_triplet_graphs(
        samples, vocab, ctx.seed, directed=ctx.cfg["train"]["directed"],
        threads=ctx.threads)
    if skipped:
        log.info("%d samples unusable for ranking triples", len(skipped))
    if not graphs:
        raise ArtifactError("no usable ranking triples in corpus")
    return graphs


def _embedding_matrix(path: str):
    embs = load_embeddings(path)
    ids = [e.sample_id for e in embs]
    points = np.array([e.vector for e in embs], dtype=np.float64)
    return ids, points


def _model_from_artifacts(centroids: np.ndarray, ids: list[str],
                          points: np.ndarray) -> CentroidModel:
    if centroids.shape[1] != points.shape[1]:
        raise ArtifactError(
            f"centroid dimension {centroids.shape[1]} does not match "
            f"embedding dimension {points.shape[1]}; artifacts out of sync")
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    cl = d2.argmin(axis=1)
    sq = d2[np.arange(len(ids)), cl]
    assignments = {sid: (int(c), float(s)) for sid, c, s in zip(ids, cl, sq)}
    inertia = float(sq.sum())
    return CentroidModel(centroids, assignments, inertia, (inertia,))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(ctx: Context) -> int:
    loader = load_parsed_corpus(ctx.args.corpus)
    for _ in loader:
        pass
    print(loader.report())
    return 1 if loader.rejected else 0


def cmd_synth(ctx: Context) -> int:
    block = ctx.cfg["synth"]
    scfg = SyntheticConfig(n_samples=block["n_samples"], n_styles=block["n_styles"])
    corpus_out = ctx.wd.new_path("synthetic.jsonl")
    labels_out = ctx.wd.new_path("labels.csv")
    generate_synthetic_corpus(scfg, np.random.default_rng(ctx.seed),
                              corpus_out, labels_out)
    record_run(ctx.wd, "synth", ctx.seed, ctx.cfg, {},
               [corpus_out, labels_out])
    print(f"wrote {block['n_samples']} samples to {corpus_out}")
    return 0


def cmd_graphs(ctx: Context) -> int:
    corpus_path = _resolve_corpus(ctx)
    samples = _load_samples(corpus_path)
    sentences = [s for smp in samples for s in smp.article + smp.summary]
    vocab = build_vocab(sentences)
    records = _triplet_records(samples, ctx.seed)
    if not records:
        raise ArtifactError("no usable ranking triples in corpus")

    vocab_out = ctx.wd.new_path("vocab.json")
    trip_out = ctx.wd.new_path("triplets.jsonl")
    _save_vocab(vocab_out, vocab)
    with open(trip_out, "w", encoding="utf-8") as f:
        for r in records:
            f.write(canonical_json(r) + "\n")
    record_run(ctx.wd, "graphs", ctx.seed, ctx.cfg,
               {os.path.basename(corpus_path): corpus_path},
               [vocab_out, trip_out])
    print(f"{len(vocab.labels)} labels, {len(records)} triples "
          f"({len(samples) - len(records)} samples skipped)")
    return 0


def cmd_train(ctx: Context) -> int:
    from .ltrs import train as train_model

    vocab_path = ctx.wd.require("vocab.json", "graphs")
    trip_path = ctx.wd.require("triplets.jsonl", "graphs")
    corpus_path = _resolve_corpus(ctx)
    samples = _load_samples(corpus_path)
    vocab = _load_vocab(vocab_path)
    _check_triplets_current(trip_path, samples, ctx.seed)

    graphs = _prepared_graphs(ctx, samples, vocab)
    block = ctx.cfg["train"]
    tcfg = TrainConfig(hidden_dim=block["hidden_dim"], margin=block["margin"],
                       batch_size=block["batch_size"], lr=block["lr"],
                       epochs=block["epochs"], seed=ctx.seed,
                       val_fraction=block["val_fraction"],
                       patience=block["patience"], directed=block["directed"])
    params, tlog = train_model(graphs, len(vocab.labels), tcfg)

    ckpt_out = ctx.wd.new_path("checkpoint.ssg")
    log_out = ctx.wd.new_path("trainlog.csv")
    save_checkpoint(ckpt_out, params, {
        "seed": ctx.seed, "vocab_size": len(vocab.labels), "train": block,
    })
    tlog.to_csv(log_out)
    record_run(ctx.wd, "train", ctx.seed, ctx.cfg,
               {os.path.basename(corpus_path): corpus_path,
                "vocab.json": vocab_path, "triplets.jsonl": trip_path},
               [ckpt_out, log_out])
    last = tlog.epochs[-1] if tlog.epochs else None
    if last is not None:
        print(f"trained {len(tlog.epochs)} epochs, "
              f"val accuracy {last.val_accuracy:.3f}")
    return 0


def cmd_embed(ctx: Context) -> int:
    ckpt_path = ctx.wd.require("checkpoint.ssg", "train")
    vocab_path = ctx.wd.require("vocab.json", "graphs")
    trip_path = ctx.wd.require("triplets.jsonl", "graphs")
    corpus_path = _resolve_corpus(ctx)
    samples = _load_samples(corpus_path)
    vocab = _load_vocab(vocab_path)
    _check_triplets_current(trip_path, samples, ctx.seed)

    params, meta = load_checkpoint(ckpt_path)
    if meta.get("vocab_size") != len(vocab.labels):
        raise ArtifactError(
            f"checkpoint was trained with vocab size {meta.get('vocab_size')}, "
            f"current vocab has {len(vocab.labels)}; run train first")

    graphs = _prepared_graphs(ctx, samples, vocab)
    embeddings = embed_corpus(params, graphs)
    sse_out = ctx.wd.new_path("embeddings.sse")
    csv_out = ctx.wd.new_path("embeddings.csv")
    save_embeddings(sse_out, embeddings)
    embeddings_to_csv(csv_out, embeddings)
    record_run(ctx.wd, "embed", ctx.seed, ctx.cfg,
               {os.path.basename(corpus_path): corpus_path,
                "vocab.json": vocab_path, "triplets.jsonl": trip_path,
                "checkpoint.ssg": ckpt_path},
               [sse_out, csv_out])
    print(f"embedded {len(embeddings)} samples "
          f"(dim {embeddings[0].vector.shape[0]})")
    return 0


def cmd_cluster(ctx: Context) -> int:
    emb_path = ctx.wd.require("embeddings.sse", "embed")
    ids, points = _embedding_matrix(emb_path)
    block = ctx.cfg["cluster"]
    model = fit_model(ids, points, block["k"], block["n_init"],
                      np.random.default_rng([ctx.seed, 1]))

    cent_out = ctx.wd.new_path("centroids.ssc")
    csv_out = ctx.wd.new_path("clusters.csv")
    proj_out = ctx.wd.new_path("projection.csv")
    rep_out = ctx.wd.new_path("cluster_report.txt")
    save_centroids(cent_out, model.centroids)
    clusters_to_csv(csv_out, model)
    projection_to_csv(proj_out, ids, project_2d(points))

    assignments = np.array([model.assignments[sid][0] for sid in ids])
    if block["k"] >= 2:
        try:
            sil = f"{silhouette(points, assignments, block['silhouette_cap'], np.random.default_rng([ctx.seed, 2])):.4f}"
        except ClusterError as e:
            sil = f"n/a ({e})"
    else:
        sil = "n/a (k=1)"
    sizes = model.cluster_sizes()
    lines = [
        f"seed: {ctx.seed}",
        f"samples: {len(ids)}",
        f"k: {block['k']}",
        f"n_init: {block['n_init']}",
        f"inertia: {model.inertia!r}",
        f"iterations: {len(model.history)}",
        f"cluster_sizes: {' '.join(str(s) for s in sizes)}",
        f"silhouette: {sil}",
    ]
    with open(rep_out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    record_run(ctx.wd, "cluster", ctx.seed, ctx.cfg,
               {"embeddings.sse": emb_path},
               [cent_out, csv_out, proj_out, rep_out])
    print(f"k={block['k']} inertia={model.inertia:.4f} sizes={sizes}")
    return 0


def cmd_split(ctx: Context) -> int:
    cent_path = ctx.wd.require("centroids.ssc", "cluster")
    emb_path = ctx.wd.require("embeddings.sse", "embed")
    ids, points = _embedding_matrix(emb_path)
    model = _model_from_artifacts(load_centroids(cent_path), ids, points)

    block = ctx.cfg["cluster"]
    id_set = set(ids)
    splits = make_cluster_splits(model, id_set, block["split_per_cluster"])
    baselines = make_baselines(model, id_set, block["baseline_total"])

    outputs = []
    for spec in splits + baselines:
        out = ctx.wd.new_path(f"{spec.name}.txt")
        write_split(out, spec)
        outputs.append(out)
    rep_out = ctx.wd.new_path("split_report.txt")
    lines = [f"seed: {ctx.seed}",
             f"per_cluster: {block['split_per_cluster']}",
             f"baseline_total: {block['baseline_total']}"]
    for spec in splits + baselines:
        lines.append(f"{spec.name}: {len(spec.sample_ids)} ids")
    with open(rep_out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    outputs.append(rep_out)

    record_run(ctx.wd, "split", ctx.seed, ctx.cfg,
               {"centroids.ssc": cent_path, "embeddings.sse": emb_path},
               outputs)
    print(f"wrote {len(splits)} cluster splits and {len(baselines)} baselines")
    return 0


def cmd_motifs(ctx: Context) -> int:
    vocab_path = ctx.wd.require("vocab.json", "graphs")
    clusters_path = ctx.wd.require("clusters.csv", "cluster")
    corpus_path = _resolve_corpus(ctx)
    samples = {s.id: s for s in _load_samples(corpus_path)}
    vocab = _load_vocab(vocab_path)

    by_cluster: dict[str, list] = {}
    with open(clusters_path, "r", encoding="utf-8") as f:
        next(f, None)
        for line in f:
            if not line.strip():
                continue
            sid, cluster, _dist = line.rstrip("\n").split(",")
            sample = samples.get(sid)
            if sample is None:
                raise ArtifactError(
                    f"clusters.csv references unknown sample {sid}; "
                    "artifacts out of sync, run cluster first")
            if not sample.summary or not sample.article:
                continue
            oracle_idx, _ = select_oracle(sample.summary[0], sample.article)
            censuses = by_cluster.setdefault(f"cluster_{cluster}", [])
            censuses.append(count_motifs(
                build_syngraph(sample.article[oracle_idx], vocab, False),
                vocab, "O"))
            censuses.append(count_motifs(
                build_syngraph(sample.summary[0], vocab, False), vocab, "S"))
    if not by_cluster:
        raise ArtifactError("no samples available for the motif census")

    report = census_report(by_cluster, ctx.cfg["cluster"]["census_top_k"])
    out = ctx.wd.new_path("census.csv")
    report.to_csv(out)
    record_run(ctx.wd, "motifs", ctx.seed, ctx.cfg,
               {os.path.basename(corpus_path): corpus_path,
                "vocab.json": vocab_path, "clusters.csv": clusters_path},
               [out])
    print(f"{report.distinct_keys} distinct motifs over "
          f"{len(by_cluster)} clusters")
    return 0


def cmd_sograph(ctx: Context) -> int:
    corpus_path = _resolve_corpus(ctx)
    samples = {s.id: s for s in _load_samples(corpus_path)}
    sid = ctx.args.sample_id
    if sid not in samples:
        raise ArtifactError(f"sample {sid!r} not in corpus")
    g = build_summary_oracle_graph(samples[sid])
    out = ctx.wd.new_path(f"sograph_{sid}.dot")
    with open(out, "w", encoding="utf-8") as f:
        f.write(summary_oracle_dot(g))
    record_run(ctx.wd, "sograph", ctx.seed, ctx.cfg,
               {os.path.basename(corpus_path): corpus_path}, [out])
    print(f"wrote {out}")
    return 0


def _parse_run_args(pairs: list[str]) -> list[tuple[str, str]]:
    runs = []
    seen = set()
    for pair in pairs:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise ArtifactError(f"--run expects NAME=PATH, got {pair!r}")
        if name in seen:
            raise ArtifactError(f"duplicate run name {name!r}")
        seen.add(name)
        runs.append((name, path))
    return runs


def cmd_eval(ctx: Context) -> int:
    corpus_path = _resolve_corpus(ctx)
    samples = _load_samples(corpus_path)
    specs = _parse_run_args(ctx.args.run)
    runs = [load_generated_run(path, name) for name, path in specs]
    tok = ctx.cfg["metric"]

    reports = [evaluate_run(run, samples, tok) for run in runs]
    if len(runs) >= 2:
        _best, best_report = cluster_best(runs, samples,
                                          ctx.args.select_metric, tok)
        reports.append(best_report)

    txt_out = ctx.wd.new_path("eval_report.txt")
    json_out = ctx.wd.new_path("eval_report.json")
    sep = "-" * 40
    with open(txt_out, "w", encoding="utf-8") as f:
        f.write(f"seed: {ctx.seed}\n\n")
        f.write(f"\n{sep}\n".join(r.to_text() for r in reports))
    with open(json_out, "w", encoding="utf-8") as f:
        f.write(canonical_json([json.loads(r.to_json()) for r in reports]) + "\n")

    inputs = {os.path.basename(corpus_path): corpus_path}
    inputs.update({f"run:{name}": path for name, path in specs})
    record_run(ctx.wd, "eval", ctx.seed, ctx.cfg, inputs, [txt_out, json_out])
    for r in reports:
        print(f"{r.system}: R2 {100 * r.rouge2:.2f}  RL {100 * r.rouge_l:.2f}")
    return 0


def cmd_report(ctx: Context) -> int:
    records = ctx.wd.read_manifest()
    if not records:
        raise ArtifactError("manifest is empty: run a pipeline command first")
    lines = ["pipeline report", ""]
    for i, rec in enumerate(records, start=1):
        outs = ", ".join(rec.get("outputs", []))
        lines.append(f"{i}. {rec['command']} (seed {rec['seed']}, "
                     f"config {rec['config_hash'][:12]}) -> {outs}")
    lines.append("")
    lines.append("artifacts:")
    from .util import sha256_file
    skip_prefixes = ("pipeline_report", "manifest")
    for entry in sorted(os.listdir(ctx.wd.root)):
        if entry.startswith(skip_prefixes):
            continue
        full = ctx.wd.path(entry)
        if os.path.isfile(full):
            lines.append(f"  {entry} sha256={sha256_file(full)[:16]}")

    out = ctx.wd.new_path("pipeline_report.txt")
    with open(out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    record_run(ctx.wd, "report", ctx.seed, ctx.cfg, {}, [out])
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylecluster",
        description="Style-aware summarization corpus pipeline")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workdir", help="artifact directory")
    parser.add_argument("--threads", type=int,
                        help="worker thread cap for graph building")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a parsed corpus file")
    p.add_argument("corpus", help="parsed corpus JSONL path")

    sub.add_parser("synth", help="generate the planted-style synthetic corpus")

    for name, helptext in [
        ("graphs", "build label vocabulary and ranking triples"),
        ("train", "train the ranking model"),
        ("embed", "embed every sample's writing style"),
        ("motifs", "per-cluster syntactic motif census"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--corpus", help="parsed corpus path override")

    sub.add_parser("cluster", help="cluster the style embeddings")
    sub.add_parser("split", help="materialize cluster and baseline splits")

    p = sub.add_parser("sograph", help="render a summary/oracle graph")
    p.add_argument("--corpus", help="parsed corpus path override")
    p.add_argument("--sample-id", required=True, dest="sample_id")

    p = sub.add_parser("eval", help="score generated summary runs")
    p.add_argument("--corpus", help="parsed corpus path override")
    p.add_argument("--run", action="append", required=True,
                   metavar="NAME=PATH", help="generated run file (repeatable)")
    p.add_argument("--select-metric", default="r2",
                   choices=["r1", "r2", "rl", "gleu"],
                   help="per-sample selection metric for the combined run")

    sub.add_parser("report", help="summarize the manifest and artifacts")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "graphs": cmd_graphs,
    "train": cmd_train,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "split": cmd_split,
    "motifs": cmd_motifs,
    "sograph": cmd_sograph,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
