"""Batch conversion of raw {id, article, summary} records into the parsed
interchange format.

Per-document failures skip the document and land in the report; a duplicate
id aborts, because downstream artifacts key on ids. Output is written in a
canonical key order so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .parser import AdapterError, DepToken, load_parser


@dataclass
class ConversionReport:
    model_id: str
    requested: int = 0
    parsed: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def text(self) -> str:
        lines = [
            f"parser model: {self.model_id}",
            f"{self.requested} requested, {self.parsed} parsed, "
            f"{len(self.skipped)} skipped",
        ]
        for ref, reason in self.skipped:
            lines.append(f"  {ref}: {reason}")
        return "\n".join(lines)


def _token_json(t: DepToken) -> dict:
    return {"form": t.form, "upos": t.upos, "head": t.head, "deprel": t.deprel}


def _summary_texts(value) -> list[str] | None:
    """A summary is raw text or a pre-split list of highlight strings."""
    if isinstance(value, str):
        return [value] if value.strip() else None
    if isinstance(value, list) and value and all(
            isinstance(x, str) for x in value):
        texts = [x for x in value if x.strip()]
        return texts or None
    return None


def parse_corpus(input_path: str, output_path: str, model_id: str,
                 report_path: str | None = None) -> ConversionReport:
    parser = load_parser(model_id)
    report = ConversionReport(model_id=model_id)
    seen: set[str] = set()

    with open(input_path, "r", encoding="utf-8") as fin, \
            open(output_path, "w", encoding="utf-8") as fout:
        for line_no, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            report.requested += 1
            ref = f"line {line_no}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                report.skipped.append((ref, f"malformed JSON: {e.msg}"))
                continue
            if not isinstance(rec, dict):
                report.skipped.append((ref, "record must be an object"))
                continue

            sid = rec.get("id")
            if not isinstance(sid, str) or not sid:
                report.skipped.append((ref, "missing or empty id"))
                continue
            ref = sid
            if sid in seen:
                raise AdapterError(f"duplicate id {sid!r} at line {line_no}")
            seen.add(sid)

            article_text = rec.get("article")
            if not isinstance(article_text, str) or not article_text.strip():
                report.skipped.append((ref, "empty article text"))
                continue
            summary_texts = _summary_texts(rec.get("summary"))
            if summary_texts is None:
                report.skipped.append((ref, "empty summary text"))
                continue

            article = parser.parse_document(article_text)
            summary = [s for text in summary_texts
                       for s in parser.parse_document(text)]
            if not article:
                report.skipped.append((ref, "article produced no sentences"))
                continue
            if not summary:
                report.skipped.append((ref, "summary produced no sentences"))
                continue

            out = {
                "id": sid,
                "article": [[_token_json(t) for t in s] for s in article],
                "summary": [[_token_json(t) for t in s] for s in summary],
            }
            fout.write(json.dumps(out, sort_keys=True,
                                  separators=(",", ":")) + "\n")
            report.parsed += 1

    with open(output_path + ".meta.json", "w", encoding="utf-8") as f:
        json.dump({"model_id": model_id, "parsed": report.parsed}, f,
                  sort_keys=True, separators=(",", ":"))
        f.write("\n")
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report.text() + "\n")
    return report
