"""Rule-based sentence splitting, tagging, and dependency attachment.

The parser is versioned through a model id so downstream results stay
attributable: same id + same input = same output, forever. Arcs follow a
flat scheme: function words attach forward to the next content word, content
words attach to a single root per sentence, so every sentence has exactly
one root and head chains can never cycle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class AdapterError(Exception):
    pass


class ParserError(AdapterError):
    pass


@dataclass(frozen=True)
class DepToken:
    form: str
    upos: str
    head: int  # 1-based position of the head token, 0 for the root
    deprel: str


_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")
_TOKEN = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?|\d+(?:\.\d+)?|[^\w\s]")
_NUMBER = re.compile(r"\d+(?:\.\d+)?$")

_LEXICON = {
    "DET": {"the", "a", "an", "this", "that", "these", "those", "my", "your",
            "his", "her", "its", "our", "their", "each", "every", "some",
            "any", "no"},
    "ADP": {"in", "on", "at", "of", "for", "with", "from", "by", "about",
            "into", "over", "under", "after", "before", "between", "through",
            "during", "against", "near", "without", "across"},
    "SCONJ": {"because", "although", "while", "if", "when", "since",
              "unless", "until"},
    "PRON": {"i", "you", "he", "she", "it", "we", "they", "me", "him",
             "them", "us", "who", "whom", "what", "someone", "anyone",
             "everyone", "nothing", "something"},
    "VERB": {"is", "are", "was", "were", "be", "been", "being", "am", "has",
             "have", "had", "do", "does", "did", "will", "would", "can",
             "could", "may", "might", "shall", "should", "must", "said",
             "says", "made", "went", "got", "found", "took", "saw"},
    "CCONJ": {"and", "or", "but", "nor", "so", "yet"},
    "PART": {"to", "not", "n't"},
    "ADV": {"very", "quickly", "never", "always", "often", "sometimes",
            "here", "there", "now", "then", "also", "just", "still",
            "again", "soon"},
    "NUM": {"one", "two", "three", "four", "five", "six", "seven", "eight",
            "nine", "ten", "hundred", "thousand", "million"},
}
_WORD_TAG = {w: tag for tag, words in _LEXICON.items() for w in words}

_ADJ_SUFFIXES = ("ous", "ful", "ive", "ic", "al", "able", "ish", "less")
_CONTENT_TAGS = {"NOUN", "PROPN", "PRON", "NUM"}

KNOWN_MODELS = ("rule-en-1",)


class RuleParser:
    def __init__(self, model_id: str):
        self.model_id = model_id

    # -- sentence splitting ------------------------------------------------

    def split_sentences(self, text: str) -> list[str]:
        parts = _SENT_SPLIT.split(text)
        return [p.strip() for p in parts if p and p.strip()]

    # -- tokenization ------------------------------------------------------

    def tokenize(self, sentence: str) -> list[str]:
        return _TOKEN.findall(sentence)

    # -- tagging -----------------------------------------------------------

    def tag(self, forms: list[str]) -> list[str]:
        tags = []
        for i, form in enumerate(forms):
            low = form.lower()
            if not re.search(r"\w", form):
                tags.append("PUNCT")
            elif _NUMBER.match(form):
                tags.append("NUM")
            elif low in _WORD_TAG:
                tags.append(_WORD_TAG[low])
            elif form[0].isupper() and i > 0:
                tags.append("PROPN")
            elif low.endswith("ly"):
                tags.append("ADV")
            elif low.endswith(("ing", "ed")):
                tags.append("VERB")
            elif low.endswith(_ADJ_SUFFIXES):
                tags.append("ADJ")
            else:
                tags.append("NOUN")
        return tags

    # -- dependency attachment --------------------------------------------

    def _next_with_tag(self, tags: list[str], start: int,
                       wanted: set[str]) -> int | None:
        for j in range(start + 1, len(tags)):
            if tags[j] in wanted:
                return j
        return None

    def parse_tokens(self, forms: list[str]) -> list[DepToken]:
        """Attach one root plus forward-pointing function-word arcs.

        Heads are 1-based; content words always head to the root, so no
        chain can loop."""
        if not forms:
            return []
        tags = self.tag(forms)
        n = len(forms)

        root = next((i for i, t in enumerate(tags) if t == "VERB"), None)
        if root is None:
            root = next((i for i, t in enumerate(tags) if t in _CONTENT_TAGS),
                        None)
        if root is None:
            root = 0

        heads = [root + 1] * n
        rels = ["dep"] * n
        heads[root], rels[root] = 0, "root"
        case_marked: set[int] = set()

        noun_like = {"NOUN", "PROPN"}
        for i, t in enumerate(tags):
            if i == root:
                continue
            if t == "PUNCT":
                rels[i] = "punct"
            elif t == "DET":
                j = self._next_with_tag(tags, i, noun_like)
                if j is not None:
                    heads[i], rels[i] = j + 1, "det"
            elif t == "ADJ":
                j = self._next_with_tag(tags, i, noun_like)
                if j is not None:
                    heads[i], rels[i] = j + 1, "amod"
            elif t == "NUM":
                j = self._next_with_tag(tags, i, noun_like)
                if j is not None:
                    heads[i], rels[i] = j + 1, "nummod"
            elif t in ("ADP", "SCONJ"):
                j = self._next_with_tag(tags, i, noun_like | {"PRON"})
                if j is not None:
                    heads[i], rels[i] = j + 1, "case"
                    case_marked.add(j)
                else:
                    rels[i] = "mark"
            elif t == "ADV":
                rels[i] = "advmod"
            elif t == "PART":
                if forms[i].lower() == "to":
                    j = self._next_with_tag(tags, i, {"VERB"})
                    heads[i] = j + 1 if j is not None else root + 1
                    rels[i] = "mark"
                else:
                    rels[i] = "advmod"
            elif t == "CCONJ":
                rels[i] = "cc"
            elif t == "VERB":
                rels[i] = "conj"

        # content-word grammatical roles around the root
        subj_taken = obj_taken = False
        for i, t in enumerate(tags):
            if i == root or t not in _CONTENT_TAGS:
                continue
            if t == "NUM" and rels[i] == "nummod":
                continue
            if i in case_marked:
                rels[i] = "obl"
            elif i < root and not subj_taken:
                rels[i], subj_taken = "nsubj", True
            elif i > root and not obj_taken:
                rels[i], obj_taken = "obj", True
            else:
                rels[i] = "obl"
            heads[i] = root + 1

        return [DepToken(forms[i], tags[i], heads[i], rels[i])
                for i in range(n)]

    def parse_sentence(self, sentence: str) -> list[DepToken]:
        return self.parse_tokens(self.tokenize(sentence))

    def parse_document(self, text: str) -> list[list[DepToken]]:
        """All non-empty sentences of a text, parsed."""
        out = []
        for sent in self.split_sentences(text):
            parsed = self.parse_sentence(sent)
            if parsed:
                out.append(parsed)
        return out


def load_parser(model_id: str) -> RuleParser:
    if model_id not in KNOWN_MODELS:
        raise ParserError(
            f"parser load failure: unknown model {model_id!r}, "
            f"available: {', '.join(KNOWN_MODELS)}")
    return RuleParser(model_id)
