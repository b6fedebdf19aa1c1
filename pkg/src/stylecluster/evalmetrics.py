"""Summary evaluation: ROUGE-1/2/L, GLEU, novel n-gram ratios, mean Jaccard
against best-matching article sentences, oracle-agreement rate, and the
per-sample best-of-several-runs selector.

All metrics share one tokenizer (lowercase, punctuation-only tokens dropped),
recorded in every report. N-grams never cross sentence boundaries; the
longest-common-subsequence metric runs on the flattened token stream. Scores
live in [0,1] internally and are scaled by 100 only in rendered reports.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import DocumentSample, ParsedSentence
from .util import canonical_json

log = logging.getLogger(__name__)

TOKENIZATION = {"lowercase": True, "drop_punctuation": True}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]+")


def _is_punct(tok: str) -> bool:
    return bool(tok) and all(unicodedata.category(c).startswith("P") for c in tok)


def tokenize(text: str, *, lowercase: bool = True,
             drop_punctuation: bool = True) -> list[str]:
    """Word tokens, lowercased and stripped of punctuation-only tokens by
    default; both switches are surfaced in evaluation reports."""
    if lowercase:
        text = text.lower()
    toks = _TOKEN_RE.findall(text)
    if drop_punctuation:
        toks = [t for t in toks if not _is_punct(t)]
    return toks


def _resolve_tokenization(tokenization: dict | None) -> dict:
    tok = dict(TOKENIZATION)
    if tokenization:
        unknown = set(tokenization) - set(TOKENIZATION)
        if unknown:
            raise ValueError(f"unknown tokenization switches: {sorted(unknown)}")
        tok.update({k: bool(v) for k, v in tokenization.items()})
    return tok


def sentence_text(sentence: ParsedSentence) -> str:
    return " ".join(t.form for t in sentence.tokens)


TokenSents = list[list[str]]


def _as_sentences(tokens) -> TokenSents:
    """Accept one flat token list or a list of per-sentence token lists."""
    if not tokens:
        return []
    if isinstance(tokens[0], str):
        return [list(tokens)]
    return [list(s) for s in tokens]


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _pooled_ngrams(sents: TokenSents, n: int) -> Counter:
    c: Counter = Counter()
    for s in sents:
        c.update(_ngrams(s, n))
    return c


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def rouge_n(candidate, reference, n: int) -> tuple[float, float, float]:
    """Clipped n-gram precision/recall/F1; (0,0,0) when a side has no n-grams."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cand = _pooled_ngrams(_as_sentences(candidate), n)
    ref = _pooled_ngrams(_as_sentences(reference), n)
    total_c, total_r = sum(cand.values()), sum(ref.values())
    if total_c == 0 or total_r == 0:
        return (0.0, 0.0, 0.0)
    match = sum(min(cnt, ref[g]) for g, cnt in cand.items())
    p, r = match / total_c, match / total_r
    return (p, r, _f1(p, r))


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> tuple[float, float, float]:
    """Longest-common-subsequence precision/recall/F1 on flat token streams."""
    cand = [t for s in _as_sentences(candidate) for t in s]
    ref = [t for s in _as_sentences(reference) for t in s]
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    lcs = _lcs_len(cand, ref)
    p, r = lcs / len(cand), lcs / len(ref)
    return (p, r, _f1(p, r))


def gleu(candidate, reference, max_n: int = 4) -> float:
    """min(precision, recall) over n-gram counts pooled across n = 1..max_n."""
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    cand_sents = _as_sentences(candidate)
    ref_sents = _as_sentences(reference)
    match = total_c = total_r = 0
    for n in range(1, max_n + 1):
        cand = _pooled_ngrams(cand_sents, n)
        ref = _pooled_ngrams(ref_sents, n)
        match += sum(min(cnt, ref[g]) for g, cnt in cand.items())
        total_c += sum(cand.values())
        total_r += sum(ref.values())
    if total_c == 0 or total_r == 0:
        return 0.0
    return min(match / total_c, match / total_r)


def novel_ngram_ratio(summary, article, n: int) -> float:
    """Fraction of summary n-gram instances never seen in the article."""
    if n < 1:
        raise ValueError("n must be at least 1")
    summary_grams = [g for s in _as_sentences(summary) for g in _ngrams(s, n)]
    if not summary_grams:
        log.warning("summary too short for %d-grams; novel ratio reported as 0", n)
        return 0.0
    seen = set(_pooled_ngrams(_as_sentences(article), n))
    novel = sum(1 for g in summary_grams if g not in seen)
    return novel / len(summary_grams)


def _best_article_match(sent_tokens: list[str], article_sets: list[set[str]]) -> tuple[int, float]:
    """Index and score of the article sentence with the highest Jaccard
    overlap; ties resolve to the lowest index."""
    s = set(sent_tokens)
    best_idx, best = 0, -1.0
    for i, a in enumerate(article_sets):
        union = s | a
        score = (len(s & a) / len(union)) if union else 0.0
        if score > best:
            best_idx, best = i, score
    return best_idx, best


def avg_jaccard_to_oracle(summary, article) -> float:
    """Mean over summary sentences of similarity to their closest article
    sentence."""
    article_sents = _as_sentences(article)
    if not article_sents:
        raise ValueError("article must be non-empty")
    summary_sents = _as_sentences(summary)
    if not summary_sents:
        return 0.0
    sets = [set(s) for s in article_sents]
    scores = [max(_best_article_match(s, sets)[1], 0.0) for s in summary_sents]
    return sum(scores) / len(scores)


def oracle_hit(gold, generated, article) -> bool:
    """Do the first gold and first generated sentences point at the same
    article sentence? An empty generated summary counts as a miss."""
    article_sents = _as_sentences(article)
    if not article_sents:
        raise ValueError("article must be non-empty")
    gen_sents = _as_sentences(generated)
    gold_sents = _as_sentences(gold)
    if not gen_sents or not gold_sents:
        return False
    sets = [set(s) for s in article_sents]
    gold_idx, _s1 = _best_article_match(gold_sents[0], sets)
    gen_idx, _s2 = _best_article_match(gen_sents[0], sets)
    return gold_idx == gen_idx


# ---------------------------------------------------------------------------
# Runs and reports
# ---------------------------------------------------------------------------


class RunError(Exception):
    pass


@dataclass
class GeneratedRun:
    name: str
    summaries: dict[str, list[str]]  # sample id -> sentence strings


def load_generated_run(path: str, name: str) -> GeneratedRun:
    summaries: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise RunError(f"line {line_no}: malformed JSON: {e.msg}") from None
            sid = rec.get("id")
            sents = rec.get("sentences")
            if not isinstance(sid, str) or not sid:
                raise RunError(f"line {line_no}: missing id")
            if not isinstance(sents, list) or not all(isinstance(s, str) for s in sents):
                raise RunError(f"line {line_no}: sentences must be a list of strings")
            if sid in summaries:
                raise RunError(f"line {line_no}: duplicate id {sid!r}")
            summaries[sid] = sents
    return GeneratedRun(name, summaries)


def save_generated_run(path: str, run: GeneratedRun) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sid in sorted(run.summaries):
            f.write(canonical_json({"id": sid, "sentences": run.summaries[sid]}) + "\n")


@dataclass
class MetricReport:
    system: str
    n_samples: int
    rouge1: float
    rouge2: float
    rouge_l: float
    gleu: float
    novel_1: float
    novel_2: float
    jaccard: float
    oracle_hit: float
    meteor: float | None = None        # reserved for external injection
    bertscore: float | None = None     # reserved for external injection
    tokenization: dict = field(default_factory=lambda: dict(TOKENIZATION))

    def values_in_range(self) -> bool:
        vals = [self.rouge1, self.rouge2, self.rouge_l, self.gleu,
                self.novel_1, self.novel_2, self.jaccard, self.oracle_hit]
        return all(0.0 <= v <= 1.0 for v in vals)

    def to_text(self) -> str:
        def pct(v):
            return "-" if v is None else f"{100.0 * v:.2f}"

        lines = [
            f"system: {self.system}",
            f"samples: {self.n_samples}",
            f"tokenization: lowercase={self.tokenization['lowercase']} "
            f"drop_punctuation={self.tokenization['drop_punctuation']}",
            "",
            "metric        value(x100)",
            f"ROUGE-1 F1    {pct(self.rouge1)}",
            f"ROUGE-2 F1    {pct(self.rouge2)}",
            f"ROUGE-L F1    {pct(self.rouge_l)}",
            f"GLEU          {pct(self.gleu)}",
            f"Novel-1       {pct(self.novel_1)}",
            f"Novel-2       {pct(self.novel_2)}",
            f"Jaccard       {pct(self.jaccard)}",
            f"OracleHit     {pct(self.oracle_hit)}",
            f"METEOR        {pct(self.meteor)}",
            f"BERTScore     {pct(self.bertscore)}",
        ]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return canonical_json({
            "system": self.system,
            "n_samples": self.n_samples,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rouge_l": self.rouge_l,
            "gleu": self.gleu,
            "novel_1": self.novel_1,
            "novel_2": self.novel_2,
            "jaccard": self.jaccard,
            "oracle_hit": self.oracle_hit,
            "meteor": self.meteor,
            "bertscore": self.bertscore,
            "tokenization": self.tokenization,
        })


def _tok_sents(texts, tok: dict) -> TokenSents:
    return [tokenize(t, lowercase=tok["lowercase"],
                     drop_punctuation=tok["drop_punctuation"]) for t in texts]


def _gold_sentences(sample: DocumentSample, tok: dict) -> TokenSents:
    return _tok_sents([sentence_text(s) for s in sample.summary], tok)


def _article_sentences(sample: DocumentSample, tok: dict) -> TokenSents:
    return _tok_sents([sentence_text(s) for s in sample.article], tok)


def evaluate_run(run: GeneratedRun, samples: list[DocumentSample],
                 tokenization: dict | None = None) -> MetricReport:
    """Score one run against gold summaries and articles, macro-averaged."""
    if not samples:
        raise ValueError("no samples to evaluate")
    tok = _resolve_tokenization(tokenization)
    missing = [s.id for s in samples if s.id not in run.summaries]
    if missing:
        shown = ", ".join(missing[:5])
        raise RunError(
            f"run {run.name!r} misses {len(missing)} of {len(samples)} ids: {shown}")

    sums = Counter()
    for sample in samples:
        gen = _tok_sents(run.summaries[sample.id], tok)
        gold = _gold_sentences(sample, tok)
        article = _article_sentences(sample, tok)
        sums["rouge1"] += rouge_n(gen, gold, 1)[2]
        sums["rouge2"] += rouge_n(gen, gold, 2)[2]
        sums["rouge_l"] += rouge_l(gen, gold)[2]
        sums["gleu"] += gleu(gen, gold)
        sums["novel_1"] += novel_ngram_ratio(gen, article, 1)
        sums["novel_2"] += novel_ngram_ratio(gen, article, 2)
        sums["jaccard"] += avg_jaccard_to_oracle(gen, article)
        sums["oracle_hit"] += float(oracle_hit(gold, gen, article))

    n = len(samples)
    return MetricReport(
        system=run.name, n_samples=n,
        rouge1=sums["rouge1"] / n, rouge2=sums["rouge2"] / n,
        rouge_l=sums["rouge_l"] / n, gleu=sums["gleu"] / n,
        novel_1=sums["novel_1"] / n, novel_2=sums["novel_2"] / n,
        jaccard=sums["jaccard"] / n, oracle_hit=sums["oracle_hit"] / n,
        tokenization=tok,
    )


_SELECTORS = {
    "r1": lambda gen, gold: rouge_n(gen, gold, 1)[2],
    "r2": lambda gen, gold: rouge_n(gen, gold, 2)[2],
    "rl": lambda gen, gold: rouge_l(gen, gold)[2],
    "gleu": lambda gen, gold: gleu(gen, gold),
}


def cluster_best(runs: list[GeneratedRun], samples: list[DocumentSample],
                 select_metric: str = "r2",
                 tokenization: dict | None = None,
                 ) -> tuple[GeneratedRun, MetricReport]:
    """Per sample, keep the candidate summary that scores best against gold
    under select_metric; ties keep the earliest run in argument order."""
    if len(runs) < 2:
        raise ValueError("need at least two runs to select from")
    if select_metric not in _SELECTORS:
        raise ValueError(f"unknown select metric {select_metric!r}, "
                         f"choose from {sorted(_SELECTORS)}")
    scorer = _SELECTORS[select_metric]
    tok = _resolve_tokenization(tokenization)

    chosen: dict[str, list[str]] = {}
    for sample in samples:
        gold = _gold_sentences(sample, tok)
        best_score, best_sents = -1.0, None
        for run in runs:
            if sample.id not in run.summaries:
                log.warning("run %s lacks sample %s; skipped for that id",
                            run.name, sample.id)
                continue
            sents = run.summaries[sample.id]
            score = scorer(_tok_sents(sents, tok), gold)
            if score > best_score:
                best_score, best_sents = score, sents
        if best_sents is None:
            raise RunError(f"no run covers sample {sample.id!r}")
        chosen[sample.id] = best_sents

    synthesized = GeneratedRun("cluster_best", chosen)
    return synthesized, evaluate_run(synthesized, samples, tok)
