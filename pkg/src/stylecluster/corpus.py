"""Parsed-corpus ingestion, token normalization, oracle selection, ranking
triplets, and a planted-style synthetic corpus generator.

A corpus file is line-delimited JSON, one document per line:

    {"id": "...", "article": [[token, ...], ...], "summary": [[token, ...], ...]}

where each token is ``{"form": str, "upos": str, "head": int, "deprel": str}``
with 1-based heads and ``head == 0`` marking the root. Internally heads are
0-based and the root uses the ``ROOT`` sentinel.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .util import stable_hash64

ROOT = -1


class CorpusError(Exception):
    """Unrecoverable corpus problem (e.g. duplicate sample id)."""


@dataclass(frozen=True)
class TokenRec:
    form: str
    upos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class ParsedSentence:
    tokens: tuple[TokenRec, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class DocumentSample:
    id: str
    article: tuple[ParsedSentence, ...]
    summary: tuple[ParsedSentence, ...]


@dataclass(frozen=True)
class StyleTriplet:
    """One ranking triplet: the first summary sentence plays the user, the
    most token-overlapping article sentence the positive item, and a random
    other article sentence the negative item."""

    sample_id: str
    user: ParsedSentence
    oracle_idx: int
    negative_idx: int
    oracle_score: float


@dataclass(frozen=True)
class Skip:
    reason: str


def sentence_problems(tokens: Sequence[TokenRec]) -> str | None:
    """Check the head relation is a single-rooted tree; return a reason or None."""
    n = len(tokens)
    if n == 0:
        return "empty sentence"
    roots = 0
    for i, t in enumerate(tokens):
        if not t.upos or not t.deprel:
            return "empty upos or deprel"
        if t.head == ROOT:
            roots += 1
            continue
        if not (0 <= t.head < n):
            return "head out of range"
        if t.head == i:
            return "token is its own head"
    if roots != 1:
        return f"expected exactly one root, found {roots}"
    # Walk to the root from every token; more than n steps means a cycle.
    for i in range(n):
        j, steps = i, 0
        while tokens[j].head != ROOT:
            j = tokens[j].head
            steps += 1
            if steps > n:
                return "head relation contains a cycle"
    return None


def _parse_sentence(raw: object) -> ParsedSentence:
    if not isinstance(raw, list) or not raw:
        raise ValueError("sentence must be a non-empty list of tokens")
    tokens = []
    for tok in raw:
        if not isinstance(tok, dict):
            raise ValueError("token must be an object")
        try:
            form = tok["form"]
            upos = tok["upos"]
            head = tok["head"]
            deprel = tok["deprel"]
        except KeyError as e:
            raise ValueError(f"token missing field {e.args[0]!r}") from None
        if not isinstance(head, int):
            raise ValueError("head must be an integer")
        tokens.append(TokenRec(str(form), str(upos), ROOT if head == 0 else head - 1, str(deprel)))
    problem = sentence_problems(tokens)
    if problem:
        raise ValueError(problem)
    return ParsedSentence(tuple(tokens))


class CorpusLoader:
    """Streaming reader for the parsed-corpus format.

    Iterating yields validated ``DocumentSample``s in file order. Rejected
    lines are counted and recorded with a reason; a duplicate sample id is a
    hard error because downstream artifacts key on ids.
    """

    def __init__(self, path: str):
        self.path = path
        self.accepted = 0
        self.rejected: list[tuple[int, str]] = []
        self._seen_ids: set[str] = set()

    def __iter__(self) -> Iterator[DocumentSample]:
        with open(self.path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    self.rejected.append((line_no, f"malformed JSON: {e.msg}"))
                    continue
                try:
                    sample = self._parse_record(rec)
                except ValueError as e:
                    self.rejected.append((line_no, str(e)))
                    continue
                if sample.id in self._seen_ids:
                    raise CorpusError(f"duplicate sample id {sample.id!r} at line {line_no}")
                self._seen_ids.add(sample.id)
                self.accepted += 1
                yield sample

    def _parse_record(self, rec: object) -> DocumentSample:
        if not isinstance(rec, dict):
            raise ValueError("record must be an object")
        sid = rec.get("id")
        if not isinstance(sid, str) or not sid:
            raise ValueError("missing or empty id")
        article = rec.get("article")
        summary = rec.get("summary")
        if not isinstance(article, list) or not article:
            raise ValueError("empty article")
        if not isinstance(summary, list) or not summary:
            raise ValueError("empty summary")
        return DocumentSample(
            id=sid,
            article=tuple(_parse_sentence(s) for s in article),
            summary=tuple(_parse_sentence(s) for s in summary),
        )

    def report(self) -> str:
        lines = [f"{self.accepted} accepted, {len(self.rejected)} rejected"]
        for line_no, reason in self.rejected:
            lines.append(f"  line {line_no}: {reason}")
        return "\n".join(lines)


def load_parsed_corpus(path: str) -> CorpusLoader:
    return CorpusLoader(path)


def _is_punct_token(tok: str) -> bool:
    return bool(tok) and all(unicodedata.category(c).startswith("P") for c in tok)


def normalize_tokens(sentence: ParsedSentence | Iterable[str]) -> set[str]:
    """Lowercased surface forms as a set, with punctuation-only tokens dropped."""
    forms = sentence.tokens if isinstance(sentence, ParsedSentence) else sentence
    out = set()
    for t in forms:
        form = t.form if isinstance(t, TokenRec) else t
        form = form.lower()
        if not _is_punct_token(form):
            out.add(form)
    return out


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def select_oracle(user: ParsedSentence, article: Sequence[ParsedSentence]) -> tuple[int, float]:
    """Index of the article sentence most Jaccard-similar to ``user``.

    Ties break toward the lowest index, so the result is stable."""
    if not article:
        raise ValueError("article must be non-empty")
    user_set = normalize_tokens(user)
    best_idx, best_score = 0, -1.0
    for i, sent in enumerate(article):
        score = jaccard(user_set, normalize_tokens(sent))
        if score > best_score:
            best_idx, best_score = i, score
    return best_idx, best_score


def extract_triplet(sample: DocumentSample, rng: np.random.Generator) -> StyleTriplet | Skip:
    """Pick (user, oracle, negative) for one sample, or Skip when the article
    is too short to supply a negative."""
    if not sample.summary:
        return Skip("empty summary")
    if len(sample.article) < 2:
        return Skip("too few article sentences")
    user = sample.summary[0]
    oracle_idx, score = select_oracle(user, sample.article)
    candidates = [i for i in range(len(sample.article)) if i != oracle_idx]
    negative_idx = candidates[int(rng.integers(len(candidates)))]
    return StyleTriplet(sample.id, user, oracle_idx, negative_idx, score)


def triplet_rng(corpus_seed: int, sample_id: str) -> np.random.Generator:
    """Per-sample random source so triplet extraction is order-independent."""
    return np.random.default_rng(stable_hash64("triplet", corpus_seed, sample_id))


# ---------------------------------------------------------------------------
# Synthetic planted-style corpus
# ---------------------------------------------------------------------------

STYLE_LABELS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int
    n_styles: int = 2
    n_nouns: int = 40
    n_verbs: int = 15
    n_adjs: int = 12
    n_advs: int = 8
    n_filler_words: int = 30
    min_article_sentences: int = 4
    max_article_sentences: int = 8

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not (2 <= self.n_styles <= len(STYLE_LABELS)):
            raise ValueError(f"n_styles must be between 2 and {len(STYLE_LABELS)}")
        for name in ("n_nouns", "n_verbs", "n_adjs", "n_advs", "n_filler_words"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if not (2 <= self.min_article_sentences <= self.max_article_sentences):
            raise ValueError("article sentence bounds invalid")


def _tok(form: str, upos: str, head: int, deprel: str) -> TokenRec:
    return TokenRec(form, upos, head, deprel)


def _content_sentence(rng: np.random.Generator, cfg: SyntheticConfig) -> ParsedSentence:
    """A richly modified transitive clause; the planted oracle sentence.

    Shape: DET ADJ+ NOUN VERB [ADV] DET [ADJ] NOUN [ADP DET NOUN]
    """
    noun = lambda: f"n{int(rng.integers(cfg.n_nouns))}"
    adj = lambda: f"adj{int(rng.integers(cfg.n_adjs))}"
    verb = f"v{int(rng.integers(cfg.n_verbs))}"
    adv = f"adv{int(rng.integers(cfg.n_advs))}"
    n_subj_adjs = 1 + int(rng.integers(2))
    has_adv = rng.random() < 0.8
    n_obj_adjs = int(rng.integers(2))
    has_pp = rng.random() < 0.6

    toks: list[tuple[str, str, str]] = []  # (form, upos, role); heads resolved below
    toks.append(("the", "DET", "det:subj"))
    for _i in range(n_subj_adjs):
        toks.append((adj(), "ADJ", "amod:subj"))
    subj_pos = len(toks)
    toks.append((noun(), "NOUN", "nsubj"))
    verb_pos = len(toks)
    toks.append((verb, "VERB", "root"))
    if has_adv:
        toks.append((adv, "ADV", "advmod"))
    toks.append(("a", "DET", "det:obj"))
    for _i in range(n_obj_adjs):
        toks.append((adj(), "ADJ", "amod:obj"))
    obj_pos = len(toks)
    toks.append((noun(), "NOUN", "obj"))
    obl_pos = None
    if has_pp:
        toks.append((str(rng.choice(["on", "in", "with"])), "ADP", "case"))
        toks.append(("the", "DET", "det:obl"))
        obl_pos = len(toks)
        toks.append((noun(), "NOUN", "obl"))

    anchors = {"subj": subj_pos, "obj": obj_pos, "obl": obl_pos}
    out = []
    for i, (form, upos, role) in enumerate(toks):
        if role == "root":
            out.append(_tok(form, upos, ROOT, "root"))
        elif role in ("nsubj", "obj", "obl"):
            out.append(_tok(form, upos, verb_pos, role))
        elif role == "advmod":
            out.append(_tok(form, upos, verb_pos, "advmod"))
        elif role == "case":
            out.append(_tok(form, upos, anchors["obl"], "case"))
        else:  # det:X / amod:X
            rel, anchor = role.split(":")
            out.append(_tok(form, upos, anchors[anchor], rel))
    return ParsedSentence(tuple(out))


def _filler_sentence(rng: np.random.Generator, cfg: SyntheticConfig) -> ParsedSentence:
    """A short pronoun-built clause drawn from a disjoint vocabulary."""
    p = f"p{int(rng.integers(cfg.n_filler_words))}"
    q = f"q{int(rng.integers(cfg.n_filler_words))}"
    v = f"fv{int(rng.integers(cfg.n_filler_words))}"
    negated = rng.random() < 0.3
    toks = [_tok(p, "PRON", 2 if negated else 1, "nsubj")]
    if negated:
        toks.append(_tok("not", "PART", 2, "advmod"))
    verb_pos = len(toks)
    toks.append(_tok(v, "VERB", ROOT, "root"))
    toks.append(_tok(q, "PRON", verb_pos, "obj"))
    return ParsedSentence(tuple(toks))


def _delete_tokens(sentence: ParsedSentence, drop_upos: set[str]) -> ParsedSentence:
    """Drop tokens with the given tags; they are leaves in the generated
    grammar, so the remaining heads renumber cleanly."""
    keep = [i for i, t in enumerate(sentence.tokens) if t.upos not in drop_upos]
    remap = {old: new for new, old in enumerate(keep)}
    out = []
    for old in keep:
        t = sentence.tokens[old]
        head = ROOT if t.head == ROOT else remap[t.head]
        out.append(_tok(t.form, t.upos, head, t.deprel))
    return ParsedSentence(tuple(out))


def _recast_sentence(sentence: ParsedSentence, rng: np.random.Generator, cfg: SyntheticConfig) -> ParsedSentence:
    """Keep the root verb and its argument nouns, prepend a fresh subject."""
    verb = next(t for t in sentence.tokens if t.head == ROOT)
    args = [t for t in sentence.tokens if t.deprel in ("obj", "obl")
            and sentence.tokens[t.head].head == ROOT]
    subj = f"s{int(rng.integers(cfg.n_filler_words))}"
    toks = [_tok(subj, "PROPN", 1, "nsubj"), _tok(verb.form, verb.upos, ROOT, "root")]
    for a in args:
        toks.append(_tok(a.form, a.upos, 1, a.deprel))
    return ParsedSentence(tuple(toks))


def apply_style(style: str, oracle: ParsedSentence, rng: np.random.Generator,
                cfg: SyntheticConfig) -> ParsedSentence:
    if style == "A":  # compress by dropping modifiers
        return _delete_tokens(oracle, {"ADJ", "ADV"})
    if style == "B":  # rebuild around the predicate with a new subject
        return _recast_sentence(oracle, rng, cfg)
    if style == "C":  # strip function words
        return _delete_tokens(oracle, {"DET", "ADP"})
    if style == "D":  # verbatim extraction
        return oracle
    raise ValueError(f"unknown style {style!r}")


def _sentence_json(sentence: ParsedSentence) -> list[dict]:
    return [
        {"form": t.form, "upos": t.upos, "head": 0 if t.head == ROOT else t.head + 1,
         "deprel": t.deprel}
        for t in sentence.tokens
    ]


def generate_synthetic_corpus(cfg: SyntheticConfig, rng: np.random.Generator,
                              corpus_path: str, labels_path: str) -> tuple[str, str]:
    """Write a planted-style corpus plus its label file.

    Each sample's article contains one content-rich sentence (the intended
    oracle) among pronoun fillers; the summary applies the sample's planted
    style transformation to that sentence. Output is byte-stable for a given
    config and seed."""
    cfg.validate()
    base = int(rng.integers(2**63))
    with open(corpus_path, "w", encoding="utf-8") as cf, open(labels_path, "w", encoding="utf-8") as lf:
        lf.write("sample_id,style_label\n")
        for i in range(cfg.n_samples):
            srng = np.random.default_rng([base, i])
            sid = f"synth-{i:06d}"
            style = STYLE_LABELS[int(srng.integers(cfg.n_styles))]
            n_sents = int(srng.integers(cfg.min_article_sentences, cfg.max_article_sentences + 1))
            oracle_pos = int(srng.integers(n_sents))
            oracle = _content_sentence(srng, cfg)
            article = [
                oracle if j == oracle_pos else _filler_sentence(srng, cfg)
                for j in range(n_sents)
            ]
            summary = [apply_style(style, oracle, srng, cfg)]
            rec = {
                "id": sid,
                "article": [_sentence_json(s) for s in article],
                "summary": [_sentence_json(s) for s in summary],
            }
            cf.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
            lf.write(f"{sid},{style}\n")
    return corpus_path, labels_path
