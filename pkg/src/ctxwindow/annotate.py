"""Entity spans, custom-type regex extraction and tag embedding.

Formatted text is built from tokens with one space between tokens, except
that punctuation is glued to whatever precedes it. Tags hug the entity text:
``the <GPE>United States</GPE>,``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AnnotationError, TagError
from .ingest import Transcript

STANDARD_LABELS = (
    "PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART",
    "LAW", "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL",
)
CUSTOM_LABELS = ("URL", "EMAIL", "PHONE_NUM", "NUMERIC")
LABELS = STANDARD_LABELS + CUSTOM_LABELS

NUMERIC_LABELS = frozenset(
    {"CARDINAL", "NUMERIC", "TIME", "QUANTITY", "MONEY", "PERCENT", "URL", "EMAIL", "PHONE_NUM"})
TEXTUAL_LABELS = frozenset(LABELS) - NUMERIC_LABELS

TAG_RE = re.compile(r"<(/?)(" + "|".join(sorted(LABELS, key=len, reverse=True)) + r")>")

# Longest token run a custom pattern may cover ("+1 (555) 123-4567" is 3 tokens).
_MAX_PATTERN_TOKENS = 6


def label_class(label: str) -> str:
    if label in NUMERIC_LABELS:
        return "numeric"
    if label in TEXTUAL_LABELS:
        return "textual"
    raise AnnotationError(f"unknown label {label!r}")


@dataclass(frozen=True, order=True)
class EntitySpan:
    start_token: int
    end_token: int  # inclusive
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise AnnotationError(f"unknown label {self.label!r}")
        if self.end_token < self.start_token:
            raise AnnotationError(
                f"span end {self.end_token} precedes start {self.start_token}")

    def tokens(self) -> range:
        return range(self.start_token, self.end_token + 1)


@dataclass(frozen=True)
class AnnotatedTranscript:
    transcript: Transcript
    spans: tuple[EntitySpan, ...]

    def __post_init__(self):
        check_spans(self.spans, len(self.transcript))


def check_spans(spans: Sequence[EntitySpan], n_tokens: int) -> None:
    """Raise unless spans are sorted, in range and pairwise disjoint."""
    prev = None
    for span in spans:
        if span.start_token < 0 or span.end_token >= n_tokens:
            raise AnnotationError(
                f"span {span.start_token}..{span.end_token} out of range for {n_tokens} tokens")
        if prev is not None:
            if span.start_token < prev.start_token:
                raise AnnotationError("spans not sorted by start token")
            if span.start_token <= prev.end_token:
                raise AnnotationError(f"overlap at token {span.start_token}")
        prev = span


def load_annotations(json_bytes: bytes | str, transcript: Transcript) -> list[EntitySpan]:
    try:
        raw = json.loads(json_bytes)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"malformed annotation JSON: {exc}") from None
    if not isinstance(raw, list):
        raise AnnotationError("annotation JSON must be an array")
    spans = []
    for i, item in enumerate(raw):
        try:
            s, e, label = item["s"], item["e"], item["label"]
        except (KeyError, TypeError):
            raise AnnotationError(f"annotation {i}: expected keys s, e, label") from None
        if not isinstance(s, int) or not isinstance(e, int):
            raise AnnotationError(f"annotation {i}: indices must be integers")
        spans.append(EntitySpan(s, e, label))
    spans.sort()
    check_spans(spans, len(transcript))
    return spans


def dump_annotations(spans: Iterable[EntitySpan]) -> str:
    return json.dumps([{"s": s.start_token, "e": s.end_token, "label": s.label} for s in spans])


@dataclass(frozen=True)
class PatternSet:
    version: str
    patterns: tuple[tuple[str, re.Pattern], ...]


def load_patterns(path: str | Path | None = None) -> PatternSet:
    """Read ``LABEL<TAB>regex`` lines; ``None`` loads the bundled pattern file."""
    if path is None:
        text = resources.files("ctxwindow").joinpath("data/patterns.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    version = "unversioned"
    patterns = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*version:\s*(\S+)", line)
            if m:
                version = m.group(1)
            continue
        label, sep, regex = line.partition("\t")
        if not sep or label not in CUSTOM_LABELS:
            raise AnnotationError(f"pattern file line {lineno}: expected CUSTOM_LABEL<TAB>regex")
        try:
            patterns.append((label, re.compile(regex)))
        except re.error as exc:
            raise AnnotationError(f"pattern file line {lineno}: {exc}") from None
    return PatternSet(version, tuple(patterns))


def token_offsets(transcript: Transcript, start: int = 0, stop: int | None = None):
    """Plain text of tokens[start:stop] plus (begin, end) char offsets per token."""
    stop = len(transcript) if stop is None else stop
    parts: list[str] = []
    offsets = []
    pos = 0
    for i in range(start, stop):
        tok = transcript.tokens[i]
        if i > start and tok.is_word:
            parts.append(" ")
            pos += 1
        offsets.append((pos, pos + len(tok.surface)))
        parts.append(tok.surface)
        pos += len(tok.surface)
    return "".join(parts), offsets


def plain_text(transcript: Transcript, start: int = 0, stop: int | None = None) -> str:
    return token_offsets(transcript, start, stop)[0]


def regex_extract_custom(transcript: Transcript, patterns: PatternSet | None = None) -> list[EntitySpan]:
    """Left-to-right scan; at each word the first pattern (file order) with a
    token-aligned match wins, taking its longest match."""
    patterns = patterns or load_patterns()
    text, offsets = token_offsets(transcript)
    n = len(offsets)
    spans = []
    i = 0
    while i < n:
        if not transcript.tokens[i].is_word:
            i += 1
            continue
        hit = None
        begin = offsets[i][0]
        for label, rx in patterns.patterns:
            for j in range(min(n, i + _MAX_PATTERN_TOKENS) - 1, i - 1, -1):
                if rx.fullmatch(text, begin, offsets[j][1]):
                    hit = (j, label)
                    break
            if hit:
                break
        if hit is None:
            i += 1
            continue
        spans.append(EntitySpan(i, hit[0], hit[1]))
        i = hit[0] + 1
    return spans


def merge_annotations(external: Sequence[EntitySpan], custom: Sequence[EntitySpan]) -> list[EntitySpan]:
    """External spans win; custom spans keep only their uncovered token runs."""
    covered = set()
    for span in external:
        covered.update(span.tokens())
    merged = list(external)
    for span in custom:
        run_start = None
        for i in span.tokens():
            if i in covered:
                if run_start is not None:
                    merged.append(EntitySpan(run_start, i - 1, span.label))
                    run_start = None
            elif run_start is None:
                run_start = i
        if run_start is not None:
            merged.append(EntitySpan(run_start, span.end_token, span.label))
    merged.sort()
    return merged


def annotate(transcript: Transcript, external: Sequence[EntitySpan] = (),
             patterns: PatternSet | None = None) -> AnnotatedTranscript:
    custom = regex_extract_custom(transcript, patterns)
    return AnnotatedTranscript(transcript, tuple(merge_annotations(external, custom)))


def embed_tags(annotated: AnnotatedTranscript, start: int = 0, stop: int | None = None) -> str:
    """Formatted text of tokens[start:stop] with ``<LABEL>``/``</LABEL>`` around each span."""
    tr = annotated.transcript
    stop = len(tr) if stop is None else stop
    if not 0 <= start <= stop <= len(tr):
        raise AnnotationError(f"range {start}..{stop} outside document of {len(tr)} tokens")
    opens = {}
    closes = {}
    for span in annotated.spans:
        if span.end_token < start or span.start_token >= stop:
            continue
        if span.start_token < start or span.end_token >= stop:
            raise AnnotationError(
                f"{span.label} span {span.start_token}..{span.end_token} straddles range {start}..{stop}")
        opens[span.start_token] = span.label
        closes[span.end_token] = span.label

    out = []
    for i in range(start, stop):
        tok = tr.tokens[i]
        if i > start and tok.is_word:
            out.append(" ")
        if i in opens:
            out.append(f"<{opens[i]}>")
        out.append(tok.surface)
        if i in closes:
            out.append(f"</{closes[i]}>")
    return "".join(out)


def strip_tags(text: str) -> str:
    return TAG_RE.sub("", text)


def iter_tags(text: str):
    """Yield (match, label, is_close) for every entity tag, checking balance and nesting."""
    open_label = None
    for m in TAG_RE.finditer(text):
        closing, label = m.group(1) == "/", m.group(2)
        if closing:
            if open_label != label:
                raise TagError(f"unbalanced </{label}> at char {m.start()}")
            open_label = None
        else:
            if open_label is not None:
                raise TagError(f"nested <{label}> inside <{open_label}> at char {m.start()}")
            open_label = label
        yield m, label, closing
    if open_label is not None:
        raise TagError(f"unclosed <{open_label}>")
