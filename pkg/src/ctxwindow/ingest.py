"""Timestamped transcript XML parsing and corpus statistics.

Canonical document layout::

    <doc id="a17" duration="1400">
      <t s="0" e="500" pron="dh ax">The</t>
      <p>,</p>
    </doc>

``<t>`` elements are timed words (integer milliseconds), ``<p>`` elements are
untimed punctuation. ``duration`` is optional and defaults to the last word end.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import TranscriptError

WORD = "word"
PUNCT = "punct"


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    kind: str = WORD
    start: int | None = None
    end: int | None = None
    pronunciation: str | None = None

    @property
    def is_word(self) -> bool:
        return self.kind == WORD


@dataclass(frozen=True)
class Transcript:
    doc_id: str
    tokens: tuple[Token, ...]
    duration: int

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[Token]:
        return [t for t in self.tokens if t.is_word]

    def anchor_times(self) -> list[int]:
        """Time position of every token; punctuation sits at the preceding word's end."""
        out = []
        last = 0
        for tok in self.tokens:
            if tok.is_word:
                out.append(tok.start)
                last = tok.end
            else:
                out.append(last)
        return out

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "duration": self.duration,
            "tokens": [
                {k: v for k, v in (("surface", t.surface), ("kind", t.kind),
                                   ("start", t.start), ("end", t.end),
                                   ("pron", t.pronunciation)) if v is not None}
                for t in self.tokens
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        tokens = tuple(
            Token(i, d["surface"], d.get("kind", WORD), d.get("start"), d.get("end"), d.get("pron"))
            for i, d in enumerate(data["tokens"])
        )
        return validate_transcript(cls(data["doc_id"], tokens, int(data["duration"])))


def _ms(value: str | None, what: str, index: int) -> int:
    if value is None:
        raise TranscriptError(f"token {index}: missing timestamp '{what}'")
    try:
        ms = int(value)
    except ValueError:
        raise TranscriptError(f"token {index}: timestamp {what}={value!r} is not integer ms") from None
    if ms < 0:
        raise TranscriptError(f"token {index}: negative timestamp {what}={ms}")
    return ms


def validate_transcript(tr: Transcript) -> Transcript:
    if not tr.tokens:
        raise TranscriptError("empty transcript")
    prev_end = 0
    max_end = 0
    for i, tok in enumerate(tr.tokens):
        if tok.index != i:
            raise TranscriptError(f"token {i}: index {tok.index} breaks contiguity")
        if not tok.surface:
            raise TranscriptError(f"token {i}: empty surface")
        if tok.surface != tok.surface.strip():
            raise TranscriptError(f"token {i}: surface has surrounding whitespace")
        if tok.kind == WORD:
            if tok.start is None or tok.end is None:
                raise TranscriptError(f"token {i}: missing timestamp")
            if tok.start >= tok.end:
                raise TranscriptError(f"token {i}: zero-length token ({tok.start}..{tok.end})")
            if tok.start < prev_end:
                raise TranscriptError(
                    f"token {i}: non-monotone timestamps (start {tok.start} < previous end {prev_end})")
            prev_end = max_end = tok.end
        elif tok.kind == PUNCT:
            if tok.start is not None or tok.end is not None:
                raise TranscriptError(f"token {i}: punctuation carries timestamps")
        else:
            raise TranscriptError(f"token {i}: unknown kind {tok.kind!r}")
    if tr.duration < max_end:
        raise TranscriptError(f"duration {tr.duration} shorter than last word end {max_end}")
    return tr


def parse_transcript_xml(xml_bytes: bytes) -> Transcript:
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise TranscriptError(f"malformed XML: {exc}") from None
    if root.tag != "doc":
        raise TranscriptError(f"root element must be <doc>, got <{root.tag}>")
    doc_id = root.get("id")
    if not doc_id:
        raise TranscriptError("<doc> lacks an id attribute")

    tokens = []
    for i, el in enumerate(root):
        surface = (el.text or "").strip()
        if el.tag == "t":
            start = _ms(el.get("s"), "s", i)
            end = _ms(el.get("e"), "e", i)
            tokens.append(Token(i, surface, WORD, start, end, el.get("pron")))
        elif el.tag == "p":
            tokens.append(Token(i, surface, PUNCT))
        else:
            raise TranscriptError(f"token {i}: unexpected element <{el.tag}>")
    if not tokens:
        raise TranscriptError("empty transcript")

    last_end = max((t.end for t in tokens if t.is_word), default=0)
    dur_attr = root.get("duration")
    duration = _ms(dur_attr, "duration", -1) if dur_attr is not None else last_end
    return validate_transcript(Transcript(doc_id, tuple(tokens), duration))


def serialize_transcript_xml(tr: Transcript) -> bytes:
    root = ET.Element("doc", {"id": tr.doc_id, "duration": str(tr.duration)})
    for tok in tr.tokens:
        if tok.is_word:
            attrs = {"s": str(tok.start), "e": str(tok.end)}
            if tok.pronunciation is not None:
                attrs["pron"] = tok.pronunciation
            el = ET.SubElement(root, "t", attrs)
        else:
            el = ET.SubElement(root, "p")
        el.text = tok.surface
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


@dataclass
class StatsReport:
    documents: int = 0
    hours: float = 0.0
    words: int = 0
    entities: int = 0
    entity_words: int = 0
    entity_word_share: float = 0.0
    per_label: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "hours": self.hours,
            "words": self.words,
            "entities": self.entities,
            "entity_words": self.entity_words,
            "entity_word_share": self.entity_word_share,
            "per_label": dict(sorted(self.per_label.items())),
        }


def corpus_stats(corpus: Iterable[tuple[Transcript, Sequence]]) -> StatsReport:
    """Count documents, hours, words and entities; spans need start_token/end_token/label."""
    report = StatsReport()
    labels: Counter[str] = Counter()
    total_ms = 0
    for tr, spans in corpus:
        report.documents += 1
        total_ms += tr.duration
        report.words += sum(1 for t in tr.tokens if t.is_word)
        for span in spans:
            report.entities += 1
            labels[str(span.label)] += 1
            report.entity_words += sum(
                1 for t in tr.tokens[span.start_token:span.end_token + 1] if t.is_word)
    report.hours = total_ms / 3_600_000
    report.entity_word_share = report.entity_words / report.words if report.words else 0.0
    report.per_label = dict(labels)
    return report
