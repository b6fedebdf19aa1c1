import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylecluster.corpus import (
    ROOT,
    CorpusError,
    CorpusLoader,
    ParsedSentence,
    Skip,
    SyntheticConfig,
    TokenRec,
    extract_triplet,
    generate_synthetic_corpus,
    jaccard,
    normalize_tokens,
    select_oracle,
    sentence_problems,
    triplet_rng,
)


def _sent(*toks):
    return ParsedSentence(tuple(TokenRec(*t) for t in toks))


def _tokens_json(parsed):
    return [
        {"form": t.form, "upos": t.upos, "head": 0 if t.head == ROOT else t.head + 1,
         "deprel": t.deprel}
        for t in parsed.tokens
    ]


SENT_AB = _sent(("dogs", "NOUN", 1, "nsubj"), ("chase", "VERB", ROOT, "root"),
                ("cats", "NOUN", 1, "obj"))


def _write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


def _record(sid, article, summary):
    return {"id": sid,
            "article": [_tokens_json(s) for s in article],
            "summary": [_tokens_json(s) for s in summary]}


class TestTreeValidation:
    def test_valid_tree(self):
        assert sentence_problems(SENT_AB.tokens) is None

    def test_no_root(self):
        toks = (TokenRec("a", "X", 1, "dep"), TokenRec("b", "X", 0, "dep"))
        assert "root" in sentence_problems(toks)

    def test_two_roots(self):
        toks = (TokenRec("a", "X", ROOT, "root"), TokenRec("b", "X", ROOT, "root"))
        assert "root" in sentence_problems(toks)

    def test_self_head(self):
        toks = (TokenRec("a", "X", ROOT, "root"), TokenRec("b", "X", 1, "dep"))
        assert sentence_problems(toks) == "token is its own head"

    def test_head_out_of_range(self):
        toks = (TokenRec("a", "X", ROOT, "root"), TokenRec("b", "X", 7, "dep"))
        assert sentence_problems(toks) == "head out of range"

    def test_cycle(self):
        toks = (TokenRec("a", "X", ROOT, "root"), TokenRec("b", "X", 2, "dep"),
                TokenRec("c", "X", 1, "dep"))
        assert "cycle" in sentence_problems(toks)

    def test_empty_sentence(self):
        assert sentence_problems(()) == "empty sentence"


class TestLoader:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_corpus(path, [_record("d1", [SENT_AB, SENT_AB], [SENT_AB])])
        loader = CorpusLoader(str(path))
        samples = list(loader)
        assert loader.accepted == 1 and not loader.rejected
        assert samples[0].id == "d1"
        assert samples[0].article[0] == SENT_AB
        assert samples[0].article[0].tokens[1].head == ROOT

    def test_rejects_bad_json_and_bad_tree(self, tmp_path):
        path = tmp_path / "c.jsonl"
        bad_tree = _record("bad", [SENT_AB], [SENT_AB])
        bad_tree["article"][0][0]["head"] = 99
        with open(path, "w", encoding="utf-8") as f:
            f.write("{not json\n")
            f.write(json.dumps(_record("ok", [SENT_AB], [SENT_AB])) + "\n")
            f.write(json.dumps(bad_tree) + "\n")
        loader = CorpusLoader(str(path))
        ids = [s.id for s in loader]
        assert ids == ["ok"]
        assert loader.accepted == 1
        assert len(loader.rejected) == 2
        assert loader.rejected[0][0] == 1
        assert "JSON" in loader.rejected[0][1]
        assert loader.rejected[1][0] == 3

    def test_duplicate_id_is_fatal(self, tmp_path):
        path = tmp_path / "c.jsonl"
        rec = _record("dup", [SENT_AB], [SENT_AB])
        _write_corpus(path, [rec, rec])
        with pytest.raises(CorpusError, match="dup"):
            list(CorpusLoader(str(path)))

    def test_empty_article_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_corpus(path, [{"id": "x", "article": [], "summary": [_tokens_json(SENT_AB)]}])
        loader = CorpusLoader(str(path))
        assert list(loader) == []
        assert loader.rejected[0][1] == "empty article"

    def test_report_mentions_counts(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_corpus(path, [_record("a", [SENT_AB], [SENT_AB])])
        loader = CorpusLoader(str(path))
        list(loader)
        assert "1 accepted, 0 rejected" in loader.report()


class TestNormalize:
    def test_lowercase_and_punct(self):
        s = _sent(("Dogs", "NOUN", 1, "nsubj"), ("chase", "VERB", ROOT, "root"),
                  (",", "PUNCT", 1, "punct"), ("Cats", "NOUN", 1, "obj"),
                  ("...", "PUNCT", 1, "punct"))
        assert normalize_tokens(s) == {"dogs", "chase", "cats"}

    def test_plain_iterable(self):
        assert normalize_tokens(["A", "b", "!"]) == {"a", "b"}

    def test_mixed_alnum_punct_kept(self):
        # "don't" is not punctuation-only, so it stays
        assert normalize_tokens(["don't", "--"]) == {"don't"}

    @given(st.lists(st.text(min_size=1, max_size=6)))
    @settings(max_examples=50, deadline=None)
    def test_subset_of_lowercased(self, words):
        out = normalize_tokens(words)
        assert out <= {w.lower() for w in words}


class TestJaccard:
    def test_known_value(self):
        assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == pytest.approx(2 / 4)

    def test_both_empty(self):
        assert jaccard(set(), set()) == 0.0

    def test_disjoint(self):
        assert jaccard({"a"}, {"b"}) == 0.0

    @given(st.sets(st.text(max_size=4), max_size=8),
           st.sets(st.text(max_size=4), max_size=8))
    @settings(max_examples=80, deadline=None)
    def test_bounds_and_symmetry(self, a, b):
        v = jaccard(a, b)
        assert 0.0 <= v <= 1.0
        assert v == jaccard(b, a)
        if a and a == b:
            assert v == 1.0


class TestOracle:
    def test_picks_best_overlap(self):
        user = _sent(("dogs", "NOUN", 1, "nsubj"), ("run", "VERB", ROOT, "root"))
        a0 = _sent(("birds", "NOUN", 1, "nsubj"), ("fly", "VERB", ROOT, "root"))
        a1 = _sent(("dogs", "NOUN", 1, "nsubj"), ("run", "VERB", ROOT, "root"))
        idx, score = select_oracle(user, [a0, a1])
        assert idx == 1
        assert score == 1.0

    def test_tie_goes_to_first(self):
        user = _sent(("x", "NOUN", ROOT, "root"))
        same = _sent(("x", "NOUN", 1, "nsubj"), ("y", "VERB", ROOT, "root"))
        idx, _score = select_oracle(user, [same, same])
        assert idx == 0

    def test_triplet_negative_avoids_oracle(self):
        sample_article = [SENT_AB] + [
            _sent((f"w{i}", "NOUN", ROOT, "root")) for i in range(3)
        ]
        from stylecluster.corpus import DocumentSample
        sample = DocumentSample("s", tuple(sample_article), (SENT_AB,))
        for seed in range(20):
            t = extract_triplet(sample, np.random.default_rng(seed))
            assert t.oracle_idx == 0
            assert t.negative_idx in (1, 2, 3)

    def test_short_article_skips(self):
        from stylecluster.corpus import DocumentSample
        sample = DocumentSample("s", (SENT_AB,), (SENT_AB,))
        out = extract_triplet(sample, np.random.default_rng(0))
        assert isinstance(out, Skip)

    def test_triplet_rng_stable(self):
        a = triplet_rng(7, "doc-1").integers(1 << 30)
        b = triplet_rng(7, "doc-1").integers(1 << 30)
        assert a == b


class TestSynthetic:
    def test_determinism_byte_identical(self, tmp_path):
        cfg = SyntheticConfig(n_samples=25, n_styles=3)
        paths = []
        for run in ("r1", "r2"):
            c = tmp_path / f"{run}.jsonl"
            l = tmp_path / f"{run}.csv"
            generate_synthetic_corpus(cfg, np.random.default_rng(123), str(c), str(l))
            paths.append((c.read_bytes(), l.read_bytes()))
        assert paths[0] == paths[1]

    def test_different_seed_differs(self, tmp_path):
        cfg = SyntheticConfig(n_samples=10)
        outs = []
        for seed in (1, 2):
            c = tmp_path / f"s{seed}.jsonl"
            l = tmp_path / f"s{seed}.csv"
            generate_synthetic_corpus(cfg, np.random.default_rng(seed), str(c), str(l))
            outs.append(c.read_bytes())
        assert outs[0] != outs[1]

    def test_output_loads_clean_and_oracle_findable(self, tmp_path):
        cfg = SyntheticConfig(n_samples=40, n_styles=4)
        c, l = tmp_path / "c.jsonl", tmp_path / "l.csv"
        generate_synthetic_corpus(cfg, np.random.default_rng(9), str(c), str(l))
        loader = CorpusLoader(str(c))
        samples = list(loader)
        assert loader.accepted == 40 and not loader.rejected

        labels = {}
        lines = l.read_text().splitlines()
        assert lines[0] == "sample_id,style_label"
        for line in lines[1:]:
            sid, style = line.split(",")
            labels[sid] = style
        assert set(labels.values()) <= {"A", "B", "C", "D"}
        assert len(labels) == 40

        # the summary must overlap its source sentence but not the fillers
        for s in samples:
            t = extract_triplet(s, triplet_rng(0, s.id))
            assert not isinstance(t, Skip)
            assert t.oracle_score > 0
            user_set = normalize_tokens(s.summary[0])
            for i, sent in enumerate(s.article):
                if i != t.oracle_idx:
                    assert jaccard(user_set, normalize_tokens(sent)) == 0.0

    def test_style_counts_roughly_uniform(self, tmp_path):
        cfg = SyntheticConfig(n_samples=400, n_styles=2)
        c, l = tmp_path / "c.jsonl", tmp_path / "l.csv"
        generate_synthetic_corpus(cfg, np.random.default_rng(5), str(c), str(l))
        lines = l.read_text().splitlines()[1:]
        counts = {"A": 0, "B": 0}
        for line in lines:
            counts[line.split(",")[1]] += 1
        assert min(counts.values()) > 100

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n_samples=5, n_styles=1).validate()
        with pytest.raises(ValueError):
            SyntheticConfig(n_samples=0).validate()
        with pytest.raises(ValueError):
            SyntheticConfig(n_samples=5, min_article_sentences=9,
                            max_article_sentences=4).validate()
